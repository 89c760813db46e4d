use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("window length must be at least one day, got {0}")]
    InvalidWindow(i64),
    #[error("invalid transaction {txn_id}: {reason}")]
    InvalidTransaction { txn_id: String, reason: String },
    #[error("pair frequency {pair} exceeds max solo frequency {max}")]
    FrequencyInvariant { pair: u32, max: u32 },
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
    #[error("unknown entity index {0}")]
    UnknownEntity(usize),
    #[error("margin must be non-negative, got {0}")]
    NegativeMargin(f64),
    #[error("batch size mismatch: {positives} positives vs {negatives} negatives")]
    BatchMismatch { positives: usize, negatives: usize },
    #[error("training split lacks a class: {0}")]
    DegenerateSplit(String),
    #[error("transaction {0} has no gross margin")]
    MissingGrossMargin(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = core::result::Result<T, Error>;
