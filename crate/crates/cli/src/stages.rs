//! Pipeline stages over a run directory. Each stage reads its inputs from
//! files, refuses inputs stamped with a different config hash (unless
//! forced), and writes artifacts stamped with the current one.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use abusegraph_core::detect::group_detections;
use abusegraph_core::model::ModelParams;
use abusegraph_core::pipeline::{
    embed_relations, evaluate, split_windows, sweep, tcs_table, ablation_all, Scored, SweepAxis, Variant, Windows,
};
use abusegraph_core::rules::{
    avoided_losses, rule1_flag, rule2_flag, store_transactions, CashbackSchedule, HeaderIncome, RuleStats,
    UnknownPolicy,
};
use abusegraph_core::synth::{generate, store_mate_groups, GroundTruthGroups};
use abusegraph_core::train::train as train_model;
use abusegraph_core::{build_fused_graph, FusedGraph, LabelSet, RelationKind, Transaction};
use anyhow::{anyhow, bail, Context, Result};

use crate::config::Config;
use crate::formats::{self, Artifact, GroupVerdict, MetricsReport};

pub const CONFIG: &str = "config.txt";
pub const TRANSACTIONS: &str = "transactions.csv";
pub const LABELS: &str = "labels.csv";
pub const GROUPS: &str = "groups.csv";
pub const CASHBACK: &str = "cashback.csv";
pub const GRAPH_TRAIN: &str = "graph_train.csv";
pub const GRAPH_DETECT: &str = "graph_detect.csv";
pub const RELATIONS: &str = "relations.csv";
pub const MODEL: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const DETECTIONS: &str = "detections.csv";
pub const DETECTION_GROUPS: &str = "detection_groups.csv";
pub const RULES: &str = "rules.csv";
pub const METRICS_TXT: &str = "metrics.txt";
pub const METRICS_JSON: &str = "metrics.json";
pub const TCS: &str = "tcs.csv";
pub const ABLATION: &str = "ablation.csv";

pub fn sweep_file(axis: SweepAxis) -> String {
    format!("sweep_{}.csv", axis.name())
}

/// A run directory bound to one resolved configuration.
#[derive(Debug, Clone)]
pub struct Run {
    pub dir: PathBuf,
    pub cfg: Config,
    pub hash: String,
    /// Accept inputs produced under another config hash.
    pub force: bool,
}

impl Run {
    pub fn new(dir: impl Into<PathBuf>, cfg: Config, force: bool) -> Self {
        let hash = cfg.hash();
        Run { dir: dir.into(), cfg, hash, force }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        std::fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.path(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    fn stamp(&self) -> Option<&str> {
        Some(&self.hash)
    }

    fn check(&self, name: &str, hash: Option<&str>) -> Result<()> {
        match hash {
            Some(h) if h != self.hash && !self.force => bail!(
                "{name} was produced under config hash {h} but the current config hashes to {}; rerun the upstream stage or pass --force",
                self.hash
            ),
            _ => Ok(()),
        }
    }

    fn read(&self, name: &str) -> Result<Artifact> {
        let art = Artifact::read(&self.path(name))?;
        self.check(name, art.hash.as_deref())?;
        Ok(art)
    }

    fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    fn save_config(&self) -> Result<()> {
        self.write(CONFIG, &format!("# config_hash={}\n{}", self.hash, self.cfg.to_text()))
    }

    pub fn transactions(&self) -> Result<Vec<Transaction>> {
        formats::parse_transactions(&self.read(TRANSACTIONS)?).with_context(|| self.path(TRANSACTIONS).display().to_string())
    }

    pub fn labels(&self) -> Result<LabelSet> {
        formats::parse_labels(&self.read(LABELS)?).with_context(|| self.path(LABELS).display().to_string())
    }

    /// Ground-truth groups when the run has them.
    pub fn groups(&self) -> Result<Option<GroundTruthGroups>> {
        if !self.exists(GROUPS) {
            return Ok(None);
        }
        formats::parse_groups(&self.read(GROUPS)?)
            .with_context(|| self.path(GROUPS).display().to_string())
            .map(Some)
    }

    pub fn cashback(&self) -> Result<Option<CashbackSchedule>> {
        if !self.exists(CASHBACK) {
            return Ok(None);
        }
        formats::parse_cashback(&self.read(CASHBACK)?)
            .with_context(|| self.path(CASHBACK).display().to_string())
            .map(Some)
    }

    pub fn graph(&self, name: &str) -> Result<FusedGraph> {
        formats::parse_graph(&self.read(name)?).with_context(|| self.path(name).display().to_string())
    }

    pub fn model(&self) -> Result<ModelParams> {
        let path = self.path(MODEL);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let (params, hash) = formats::parse_checkpoint(&text).with_context(|| path.display().to_string())?;
        self.check(MODEL, hash.as_deref())?;
        Ok(params)
    }

    fn windows(&self, txns: &[Transaction]) -> Result<Windows> {
        Ok(split_windows(txns, &self.cfg.pipeline)?)
    }

    /// Fraud users under the oracle policy; empty without ground truth.
    fn truth(&self) -> Result<BTreeSet<String>> {
        let groups = self.groups()?;
        if self.cfg.policy == UnknownPolicy::Oracle && groups.is_none() {
            bail!("unknown_policy=oracle needs {} in the run directory", GROUPS);
        }
        Ok(groups.map(|g| g.fraud_users()).unwrap_or_default())
    }

    fn policy_name(&self) -> String {
        self.cfg.get("unknown_policy").expect("known key")
    }
}

pub fn generate_stage(run: &Run) -> Result<()> {
    let s = generate(&run.cfg.scenario)?;
    run.write(TRANSACTIONS, &formats::format_transactions(&s.transactions, run.stamp()))?;
    run.write(LABELS, &formats::format_labels(&s.labels, run.stamp()))?;
    run.write(GROUPS, &formats::format_groups(&s.groups, run.stamp()))?;
    run.write(CASHBACK, &formats::format_cashback(&s.cashback, run.stamp()))?;
    run.save_config()
}

pub fn build_graph_stage(run: &Run) -> Result<()> {
    let txns = run.transactions()?;
    let w = run.windows(&txns)?;
    let lambda = run.cfg.pipeline.lambda;
    run.write(GRAPH_TRAIN, &formats::format_graph(&build_fused_graph(&w.train, lambda), run.stamp()))?;
    run.write(GRAPH_DETECT, &formats::format_graph(&build_fused_graph(&w.detect, lambda), run.stamp()))?;
    run.save_config()
}

pub fn train_stage(run: &Run) -> Result<()> {
    let txns = run.transactions()?;
    let labels = run.labels()?;
    let graph = run.graph(GRAPH_TRAIN)?;
    let w = run.windows(&txns)?;
    let p = &run.cfg.pipeline;
    // the seeds-only variant differs at detection time only
    let variant = match run.cfg.variant {
        Variant::NoPropagation => Variant::Full,
        v => v,
    };
    let (relations, relation_loss) = embed_relations(&w.train, p, variant)?;
    let (params, report) = train_model(&graph, relations, relation_loss, &labels, &p.train_config(variant))?;
    run.write(MODEL, &formats::format_checkpoint(&params, run.stamp()))?;
    run.write(RELATIONS, &formats::format_relations(&params.relations, run.stamp()))?;
    run.write(TRAIN_LOG, &formats::format_train_log(&report, run.stamp()))?;
    run.save_config()
}

fn scored(run: &Run) -> Result<Scored> {
    let params = run.model()?;
    let graph = run.graph(GRAPH_DETECT)?;
    Ok(Scored::new(&params, graph, run.cfg.variant.weighting()))
}

pub fn detect_stage(run: &Run) -> Result<()> {
    let txns = run.transactions()?;
    let w = run.windows(&txns)?;
    let p = &run.cfg.pipeline;
    let result = scored(run)?.detect(p.seed_quantile, p.propagation_threshold, run.cfg.variant != Variant::NoPropagation);
    let groups = group_detections(&result.predicted(), &w.detect);
    run.write(DETECTIONS, &formats::format_detections(&result, run.stamp()))?;
    run.write(DETECTION_GROUPS, &formats::format_store_groups(&groups, run.stamp()))?;
    run.save_config()
}

pub fn evaluate_stage(run: &Run) -> Result<MetricsReport> {
    let txns = run.transactions()?;
    let labels = run.labels()?;
    let truth = run.truth()?;
    let schedule = run.cashback()?;
    let result = formats::parse_detections(&run.read(DETECTIONS)?)?;
    let w = run.windows(&txns)?;
    let p = &run.cfg.pipeline;

    let m = evaluate(&result, &w.detect, &labels, &truth, run.cfg.policy);
    let predicted = result.predicted();
    let mut report = MetricsReport::new(&m, &run.policy_name(), run.stamp());
    report.predicted = predicted.len();
    report.seeds = result.users.iter().filter(|u| u.is_seed).count();
    report.propagated = result.users.iter().filter(|u| u.is_propagated).count();
    let blocked = w
        .detect
        .iter()
        .filter(|t| predicted.contains(&t.user_id) && t.relation(RelationKind::Promotion).is_some());
    report.avoided_losses = avoided_losses(blocked).ok();

    let stats = RuleStats::from_population(&w.detect, &labels, &schedule.clone().unwrap_or_default(), p.commission, p.kappa);
    for g in group_detections(&predicted, &w.detect) {
        let members: Vec<&str> = g.users.iter().map(String::as_str).collect();
        let (stocking, witnesses) = rule1_flag(&members, &w.detect, &stats);
        let income = schedule
            .as_ref()
            .map(|s| HeaderIncome::compute(store_transactions(&w.detect, &g.store), s, p.commission));
        report.groups.push(GroupVerdict {
            size: members.len(),
            stocking,
            stocking_products: witnesses,
            cashback: income.as_ref().map(|i| rule2_flag(i, &stats)),
            header_cashback_ratio: income.as_ref().map(HeaderIncome::ratio),
            store: g.store,
        });
    }
    run.write(RULES, &formats::format_verdicts(&report.groups, run.stamp()))?;
    run.write(METRICS_TXT, &report.to_text())?;
    run.write(METRICS_JSON, &report.to_json())?;
    run.save_config()?;
    Ok(report)
}

pub fn analyze_tcs_stage(run: &Run) -> Result<()> {
    let graph = run.graph(GRAPH_DETECT)?;
    let groups = run.groups()?.ok_or_else(|| anyhow!("analyze-tcs needs {GROUPS} in the run directory"))?;
    let txns = run.transactions()?;
    let w = run.windows(&txns)?;
    let fraud: Vec<Vec<String>> = groups.groups.iter().map(|g| g.members.clone()).collect();
    let sizes: Vec<usize> = fraud.iter().map(Vec::len).collect();
    let normal = store_mate_groups(&w.detect, &groups.fraud_users(), &sizes, run.cfg.pipeline.seed);
    run.write(TCS, &formats::format_tcs(&tcs_table(&graph, &fraud, &normal), run.stamp()))?;
    run.save_config()
}

pub fn sweep_stage(run: &Run, axis: SweepAxis, grid: &[f64]) -> Result<()> {
    let txns = run.transactions()?;
    let labels = run.labels()?;
    let truth = run.truth()?;
    let w = run.windows(&txns)?;
    let s = scored(run)?;
    let points = sweep(&s, &w.detect, &labels, &truth, run.cfg.policy, &run.cfg.pipeline, axis, grid);
    run.write(&sweep_file(axis), &formats::format_sweep(&points, run.stamp()))?;
    run.save_config()
}

/// Every variant on freshly generated scenarios, one per seed.
pub fn ablation_stage(run: &Run, seeds: &[u64]) -> Result<()> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let by_variant = ablation_all(&run.cfg.scenario, &run.cfg.pipeline, seed, &Variant::ALL)?;
        rows.extend(by_variant.into_iter().map(|(v, m)| (seed, v, m)));
    }
    run.write(ABLATION, &formats::format_ablation(&rows, run.stamp()))?;
    run.save_config()
}

pub fn run_all(run: &Run) -> Result<MetricsReport> {
    generate_stage(run)?;
    build_graph_stage(run)?;
    train_stage(run)?;
    detect_stage(run)?;
    let report = evaluate_stage(run)?;
    analyze_tcs_stage(run)?;
    for axis in [SweepAxis::SeedQuantile, SweepAxis::PropagationThreshold] {
        sweep_stage(run, axis, &axis.default_grid())?;
    }
    Ok(report)
}

/// Resolves the config for a run directory: `--config` if given, else the
/// directory's own `config.txt` when present.
pub fn resolve_config(dir: &Path, file: Option<&Path>, sets: &[String]) -> Result<Config> {
    let own = dir.join(CONFIG);
    let file = file.map(Path::to_path_buf).or_else(|| own.exists().then_some(own));
    Config::resolve(file.as_deref(), std::env::vars(), sets)
}
