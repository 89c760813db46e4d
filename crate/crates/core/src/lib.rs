//! Core algorithms for detecting group-based promotion abuse in e-commerce
//! transaction logs.
//!
//! The crate builds a multi-relation fused user graph from a window of
//! transactions, learns relation embeddings with TransR, trains an
//! attention-aggregation + semi-supervised autoencoder model on that graph,
//! and turns reconstruction losses into a list of fraudsters through seed
//! selection and single-pass anomaly propagation. A synthetic scenario
//! generator supplies logs with planted fraud groups and ground truth.
//!
//! Everything here is `no_std` + `alloc`; file formats, configuration files
//! and the CLI live in the companion `abusegraph` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod detect;
pub mod error;
pub mod graph;
pub mod math;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod rules;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod transr;
pub mod txn;

pub use error::{Error, Result};
pub use graph::{build_fused_graph, FusedGraph};
pub use txn::{Label, LabelSet, RelationKind, Transaction};
