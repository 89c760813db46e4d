//! End-to-end stages: windowing, relation embedding, training, scoring,
//! detection and evaluation, plus the ablation variants.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::detect::{group_detections, propagate, select_seeds, DetectionResult, StoreGroup};
use crate::error::{Error, Result};
use crate::graph::{build_fused_graph, relate, tcs, FusedGraph};
use crate::model::{EdgeInputs, EdgeWeighting, ModelDims, ModelParams};
use crate::rules::{metrics, Metrics, UnknownPolicy};
use crate::synth::{generate, Scenario, ScenarioConfig};
use crate::train::{train, RelationLoss, TrainConfig, TrainReport};
use crate::transr::{fit_transr, RelationEmbeddings, TransRConfig, TripleSet};
use crate::txn::{last_day, window, LabelSet, RelationKind, Transaction};

/// Pipeline variants for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum Variant {
    #[default]
    Full,
    /// Uniform relation vectors, no relation loss.
    NoRelationEmbedding,
    /// Unit relation weights in edge features.
    UnitWeights,
    /// Seeds only, no propagation.
    NoPropagation,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoRelationEmbedding,
        Variant::UnitWeights,
        Variant::NoPropagation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRelationEmbedding => "-R",
            Variant::UnitWeights => "-W",
            Variant::NoPropagation => "-P",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn weighting(self) -> EdgeWeighting {
        match self {
            Variant::UnitWeights => EdgeWeighting::Unit,
            _ => EdgeWeighting::CoOccurrence,
        }
    }
}

/// All pipeline hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Sigmoid sharpness in the co-occurrence weight.
    pub lambda: f64,
    /// Window length `T` in days.
    pub window_days: i64,
    /// Last day of the training window; defaults to one window before the
    /// detection window.
    pub train_end_day: Option<i64>,
    /// Last day of the detection window; defaults to the last logged day.
    pub detect_end_day: Option<i64>,
    pub dims: ModelDims,
    /// TransR entity dimension; the relation dimension is `dims.relation_dim`.
    pub entity_dim: usize,
    pub margin: f64,
    pub transr_epochs: usize,
    pub transr_batch: usize,
    pub transr_learning_rate: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub check_every: usize,
    pub patience: usize,
    pub train_parts: usize,
    pub val_parts: usize,
    pub relation_batch: usize,
    /// Seed quantile `T_s`.
    pub seed_quantile: f64,
    /// Propagation threshold `T_p`.
    pub propagation_threshold: f64,
    pub kappa: f64,
    pub commission: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let transr = TransRConfig::default();
        let train = TrainConfig::default();
        PipelineConfig {
            lambda: 1.0,
            window_days: 7,
            train_end_day: None,
            detect_end_day: None,
            dims: train.dims,
            entity_dim: transr.entity_dim,
            margin: transr.margin,
            transr_epochs: transr.epochs,
            transr_batch: transr.batch_size,
            transr_learning_rate: transr.learning_rate,
            learning_rate: train.learning_rate,
            max_epochs: train.max_epochs,
            check_every: train.check_every,
            patience: train.patience,
            train_parts: train.train_parts,
            val_parts: train.val_parts,
            relation_batch: train.relation_batch,
            seed_quantile: train.seed_quantile,
            propagation_threshold: 0.65,
            kappa: 3.0,
            commission: 0.05,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window_days < 1 {
            return Err(Error::InvalidWindow(self.window_days));
        }
        if !(self.seed_quantile > 0.0 && self.seed_quantile < 1.0) {
            return bad(format!("seed_quantile {} must lie in (0, 1)", self.seed_quantile));
        }
        if self.margin < 0.0 {
            return Err(Error::NegativeMargin(self.margin));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda {} must be positive", self.lambda));
        }
        if self.kappa <= 0.0 {
            return bad(format!("kappa {} must be positive", self.kappa));
        }
        let d = &self.dims;
        if [d.relation_dim, d.node_dim, d.attention_dim, d.heads, d.hidden_dim, d.latent_dim, self.entity_dim]
            .contains(&0)
        {
            return bad(String::from("all dimensions must be positive"));
        }
        if self.check_every == 0 || self.train_parts == 0 || self.val_parts == 0 {
            return bad(String::from("check_every and split parts must be positive"));
        }
        Ok(())
    }

    pub fn transr_config(&self) -> TransRConfig {
        TransRConfig {
            entity_dim: self.entity_dim,
            relation_dim: self.dims.relation_dim,
            margin: self.margin,
            epochs: self.transr_epochs,
            batch_size: self.transr_batch,
            learning_rate: self.transr_learning_rate,
            seed: self.seed,
        }
    }

    pub fn train_config(&self, variant: Variant) -> TrainConfig {
        TrainConfig {
            dims: self.dims,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            check_every: self.check_every,
            patience: self.patience,
            train_parts: self.train_parts,
            val_parts: self.val_parts,
            seed_quantile: self.seed_quantile,
            weighting: variant.weighting(),
            relation_batch: self.relation_batch,
            margin: self.margin,
            seed: self.seed.wrapping_add(1),
        }
    }
}

/// Training and detection windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    pub train_end: i64,
    pub detect_end: i64,
    pub train: Vec<Transaction>,
    pub detect: Vec<Transaction>,
}

pub fn resolve_windows(txns: &[Transaction], cfg: &PipelineConfig) -> Result<(i64, i64)> {
    let detect_end = match cfg.detect_end_day {
        Some(d) => d,
        None => last_day(txns).ok_or_else(|| Error::Config(String::from("empty transaction log")))?,
    };
    let train_end = cfg.train_end_day.unwrap_or(detect_end - cfg.window_days);
    Ok((train_end, detect_end))
}

pub fn split_windows(txns: &[Transaction], cfg: &PipelineConfig) -> Result<Windows> {
    let (train_end, detect_end) = resolve_windows(txns, cfg)?;
    Ok(Windows {
        train_end,
        detect_end,
        train: window(txns, train_end, cfg.window_days)?,
        detect: window(txns, detect_end, cfg.window_days)?,
    })
}

/// Relation vectors for a variant, plus the relation-loss state used to
/// fine-tune them (absent for the uniform-vector variant).
pub fn embed_relations(
    train_txns: &[Transaction],
    cfg: &PipelineConfig,
    variant: Variant,
) -> Result<(RelationEmbeddings, Option<RelationLoss>)> {
    if variant == Variant::NoRelationEmbedding {
        return Ok((RelationEmbeddings::uniform(cfg.dims.relation_dim), None));
    }
    let triples = TripleSet::from_events(&relate(train_txns));
    if triples.is_empty() {
        return Err(Error::Config(String::from("training window has no relation events")));
    }
    let transr = fit_transr(&triples, &cfg.transr_config())?;
    Ok((transr.relation_embeddings(), Some(RelationLoss { transr, triples })))
}

/// Trains the model on the training window.
pub fn fit(
    train_txns: &[Transaction],
    labels: &LabelSet,
    cfg: &PipelineConfig,
    variant: Variant,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let graph = build_fused_graph(train_txns, cfg.lambda);
    let (relations, relation_loss) = embed_relations(train_txns, cfg, variant)?;
    train(&graph, relations, relation_loss, labels, &cfg.train_config(variant))
}

/// Reconstruction scores and attention of a trained model on a graph.
#[derive(Debug, Clone)]
pub struct Scored {
    pub graph: FusedGraph,
    pub scores: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Scored {
    pub fn new(params: &ModelParams, graph: FusedGraph, weighting: EdgeWeighting) -> Self {
        let fwd = params.forward(&EdgeInputs::from_graph(&graph, weighting));
        Scored { scores: fwd.losses, alpha: fwd.alpha, graph }
    }

    /// Seeds at quantile `t_s`, then (unless `propagate_on` is off) one hop of
    /// propagation at threshold `t_p`.
    pub fn detect(&self, t_s: f64, t_p: f64, propagate_on: bool) -> DetectionResult {
        let seeds = select_seeds(&self.scores, t_s);
        let flagged = if propagate_on {
            propagate(&self.graph, &seeds, &self.alpha, t_p)
        } else {
            BTreeSet::new()
        };
        DetectionResult::new(&self.graph, &self.scores, &seeds, &flagged)
    }
}

/// Scores the detection window and detects fraudsters.
pub fn detect_window(
    params: &ModelParams,
    detect_txns: &[Transaction],
    cfg: &PipelineConfig,
    variant: Variant,
) -> (Scored, DetectionResult) {
    let scored = Scored::new(params, build_fused_graph(detect_txns, cfg.lambda), variant.weighting());
    let result = scored.detect(
        cfg.seed_quantile,
        cfg.propagation_threshold,
        variant != Variant::NoPropagation,
    );
    (scored, result)
}

/// Users who transacted in the window; the universe metrics are scored on.
pub fn universe(txns: &[Transaction]) -> BTreeSet<String> {
    txns.iter().map(|t| t.user_id.clone()).collect()
}

/// Metrics of a detection against labels, with ground-truth fraud users
/// standing in for unlabeled users under the oracle policy.
pub fn evaluate(
    result: &DetectionResult,
    detect_txns: &[Transaction],
    labels: &LabelSet,
    truth: &BTreeSet<String>,
    policy: UnknownPolicy,
) -> Metrics {
    let users = universe(detect_txns);
    metrics(&result.predicted(), users.iter().map(String::as_str), labels, policy, truth)
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub windows: Windows,
    pub params: ModelParams,
    pub report: TrainReport,
    pub scored: Scored,
    pub detection: DetectionResult,
    pub groups: Vec<StoreGroup>,
}

/// Windows, trains and detects in one call.
pub fn run(txns: &[Transaction], labels: &LabelSet, cfg: &PipelineConfig, variant: Variant) -> Result<RunOutput> {
    let windows = split_windows(txns, cfg)?;
    let (params, report) = fit(&windows.train, labels, cfg, variant)?;
    let (scored, detection) = detect_window(&params, &windows.detect, cfg, variant);
    let groups = group_detections(&detection.predicted(), &windows.detect);
    Ok(RunOutput { windows, params, report, scored, detection, groups })
}

/// Oracle-policy metrics of a run on a generated scenario.
pub fn scenario_metrics(scenario: &Scenario, out: &RunOutput) -> Metrics {
    evaluate(
        &out.detection,
        &out.windows.detect,
        &scenario.labels,
        &scenario.groups.fraud_users(),
        UnknownPolicy::Oracle,
    )
}

/// Runs one variant on a freshly generated scenario with the given seed
/// (used for both the scenario and the pipeline).
pub fn ablation_run(variant: Variant, scenario: &ScenarioConfig, cfg: &PipelineConfig, seed: u64) -> Result<Metrics> {
    Ok(ablation_all(scenario, cfg, seed, &[variant])?.remove(&variant).expect("variant requested"))
}

/// Runs several variants on one scenario. The seeds-only variant reuses the
/// full model when both are requested.
pub fn ablation_all(
    scenario: &ScenarioConfig,
    cfg: &PipelineConfig,
    seed: u64,
    variants: &[Variant],
) -> Result<BTreeMap<Variant, Metrics>> {
    let scenario = generate(&ScenarioConfig { seed, ..scenario.clone() })?;
    let cfg = PipelineConfig { seed, ..cfg.clone() };
    let windows = split_windows(&scenario.transactions, &cfg)?;
    let truth = scenario.groups.fraud_users();
    let mut out = BTreeMap::new();
    let mut full_model: Option<ModelParams> = None;
    let wanted: BTreeSet<Variant> = variants.iter().copied().collect();
    for &variant in &wanted {
        let params = match (variant, &full_model) {
            (Variant::NoPropagation, Some(p)) => p.clone(),
            _ => {
                let train_as = if variant == Variant::NoPropagation { Variant::Full } else { variant };
                fit(&windows.train, &scenario.labels, &cfg, train_as)?.0
            }
        };
        let (_, detection) = detect_window(&params, &windows.detect, &cfg, variant);
        out.insert(
            variant,
            evaluate(&detection, &windows.detect, &scenario.labels, &truth, UnknownPolicy::Oracle),
        );
        if variant == Variant::Full {
            full_model = Some(params);
        }
    }
    Ok(out)
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub metrics: Metrics,
}

/// Which threshold a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SeedQuantile,
    PropagationThreshold,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SeedQuantile => "seed_quantile",
            SweepAxis::PropagationThreshold => "propagation_threshold",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [SweepAxis::SeedQuantile, SweepAxis::PropagationThreshold]
            .into_iter()
            .find(|a| a.name() == s)
    }

    /// Default grid: `T_s` from 0.4% to 2.4% in 0.2% steps, `T_p` from 0.4
    /// to 0.9 in 0.05 steps.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::SeedQuantile => (0..=10).map(|k| (4 + 2 * k) as f64 / 1000.0).collect(),
            SweepAxis::PropagationThreshold => (0..=10).map(|k| (40 + 5 * k) as f64 / 100.0).collect(),
        }
    }
}

/// Re-thresholds one scored detection window along `axis`.
pub fn sweep(
    scored: &Scored,
    detect_txns: &[Transaction],
    labels: &LabelSet,
    truth: &BTreeSet<String>,
    policy: UnknownPolicy,
    cfg: &PipelineConfig,
    axis: SweepAxis,
    grid: &[f64],
) -> Vec<SweepPoint> {
    grid.iter()
        .map(|&threshold| {
            let (t_s, t_p) = match axis {
                SweepAxis::SeedQuantile => (threshold, cfg.propagation_threshold),
                SweepAxis::PropagationThreshold => (cfg.seed_quantile, threshold),
            };
            let result = scored.detect(t_s, t_p, true);
            SweepPoint { threshold, metrics: evaluate(&result, detect_txns, labels, truth, policy) }
        })
        .collect()
}

/// Mean cohesion of fraud and normal groups in one relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcsRow {
    pub relation: RelationKind,
    pub fraud: f64,
    pub normal: f64,
}

/// Mean TCS per relation over two families of groups. A group with no
/// weight in a relation counts as zero cohesion.
pub fn tcs_table(graph: &FusedGraph, fraud: &[Vec<String>], normal: &[Vec<String>]) -> Vec<TcsRow> {
    let mean = |groups: &[Vec<String>], r: RelationKind| {
        if groups.is_empty() {
            return 0.0;
        }
        let sum: f64 = groups
            .iter()
            .map(|g| tcs(graph, g.iter().map(String::as_str), r).unwrap_or(0.0))
            .sum();
        sum / groups.len() as f64
    };
    RelationKind::ALL
        .into_iter()
        .map(|r| TcsRow { relation: r, fraud: mean(fraud, r), normal: mean(normal, r) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_hyperparameters() {
        let c = PipelineConfig::default();
        assert_eq!(c.lambda, 1.0);
        assert_eq!(c.window_days, 7);
        assert_eq!(c.dims.relation_dim, 8);
        assert_eq!(c.dims.edge_dim(), 64);
        assert_eq!(c.dims.node_dim, 52);
        assert_eq!(c.dims.attention_dim, 8);
        assert_eq!(c.dims.heads, 3);
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.max_epochs, 2000);
        assert_eq!(c.seed_quantile, 0.012);
        assert_eq!(c.propagation_threshold, 0.65);
        assert_eq!(c.kappa, 3.0);
        assert_eq!(c.margin, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::from_name(v.name()), Some(v));
        }
    }

    #[test]
    fn grids_have_eleven_points() {
        assert_eq!(SweepAxis::SeedQuantile.default_grid().len(), 11);
        let tp = SweepAxis::PropagationThreshold.default_grid();
        assert_eq!(tp.len(), 11);
        assert_eq!(tp[0], 0.4);
        assert_eq!(tp[10], 0.9);
    }

    #[test]
    fn automatic_windows() {
        let txns: Vec<Transaction> = (1..=14).map(|d| Transaction::new(format!("t{d}"), "u", "p", d)).collect();
        let w = split_windows(&txns, &PipelineConfig::default()).unwrap();
        assert_eq!((w.train_end, w.detect_end), (7, 14));
        assert_eq!(w.train.len(), 7);
        assert_eq!(w.detect.first().unwrap().day, 8);
    }
}
