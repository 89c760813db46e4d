//! Run configuration: one flat `key=value` namespace covering the scenario
//! generator and every pipeline hyperparameter.
//!
//! Precedence, lowest first: built-in defaults, `ABUSEGRAPH_*` environment
//! variables, the config file, `--set key=value` flags.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use abusegraph_core::pipeline::{PipelineConfig, Variant};
use abusegraph_core::rules::UnknownPolicy;
use abusegraph_core::synth::ScenarioConfig;
use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

pub const ENV_PREFIX: &str = "ABUSEGRAPH_";

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "seed",
    "n_users",
    "n_products",
    "n_days",
    "fraud_fraction",
    "n_stocking_groups",
    "n_cashback_groups",
    "n_mixed_groups",
    "group_size_min",
    "group_size_max",
    "normal_txn_rate",
    "lambda",
    "window_days",
    "train_end_day",
    "detect_end_day",
    "relation_dim",
    "entity_dim",
    "edge_dim",
    "node_dim",
    "attention_dim",
    "heads",
    "hidden_dim",
    "latent_dim",
    "margin",
    "transr_epochs",
    "transr_batch",
    "transr_learning_rate",
    "learning_rate",
    "max_epochs",
    "check_every",
    "patience",
    "split",
    "relation_batch",
    "seed_quantile",
    "propagation_threshold",
    "kappa",
    "commission",
    "unknown_policy",
    "variant",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub pipeline: PipelineConfig,
    pub variant: Variant,
    pub policy: UnknownPolicy,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            scenario: ScenarioConfig::default(),
            pipeline: PipelineConfig::default(),
            variant: Variant::Full,
            policy: UnknownPolicy::Exclude,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("invalid value {value:?} for {key}: {e}"))
}

fn day(key: &str, value: &str) -> Result<Option<i64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_day(d: Option<i64>) -> String {
    d.map_or_else(|| "auto".to_string(), |d| d.to_string())
}

fn policy_name(p: UnknownPolicy) -> &'static str {
    match p {
        UnknownPolicy::Exclude => "exclude",
        UnknownPolicy::Oracle => "oracle",
    }
}

impl Config {
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.scenario;
        let p = &self.pipeline;
        let d = &p.dims;
        Some(match key {
            "seed" => s.seed.to_string(),
            "n_users" => s.n_users.to_string(),
            "n_products" => s.n_products.to_string(),
            "n_days" => s.n_days.to_string(),
            "fraud_fraction" => s.fraud_fraction.to_string(),
            "n_stocking_groups" => s.n_stocking_groups.to_string(),
            "n_cashback_groups" => s.n_cashback_groups.to_string(),
            "n_mixed_groups" => s.n_mixed_groups.to_string(),
            "group_size_min" => s.group_size_range.0.to_string(),
            "group_size_max" => s.group_size_range.1.to_string(),
            "normal_txn_rate" => s.normal_txn_rate.to_string(),
            "lambda" => p.lambda.to_string(),
            "window_days" => p.window_days.to_string(),
            "train_end_day" => show_day(p.train_end_day),
            "detect_end_day" => show_day(p.detect_end_day),
            "relation_dim" => d.relation_dim.to_string(),
            "entity_dim" => p.entity_dim.to_string(),
            "edge_dim" => d.edge_dim().to_string(),
            "node_dim" => d.node_dim.to_string(),
            "attention_dim" => d.attention_dim.to_string(),
            "heads" => d.heads.to_string(),
            "hidden_dim" => d.hidden_dim.to_string(),
            "latent_dim" => d.latent_dim.to_string(),
            "margin" => p.margin.to_string(),
            "transr_epochs" => p.transr_epochs.to_string(),
            "transr_batch" => p.transr_batch.to_string(),
            "transr_learning_rate" => p.transr_learning_rate.to_string(),
            "learning_rate" => p.learning_rate.to_string(),
            "max_epochs" => p.max_epochs.to_string(),
            "check_every" => p.check_every.to_string(),
            "patience" => p.patience.to_string(),
            "split" => format!("{}:{}", p.train_parts, p.val_parts),
            "relation_batch" => p.relation_batch.to_string(),
            "seed_quantile" => p.seed_quantile.to_string(),
            "propagation_threshold" => p.propagation_threshold.to_string(),
            "kappa" => p.kappa.to_string(),
            "commission" => p.commission.to_string(),
            "unknown_policy" => policy_name(self.policy).to_string(),
            "variant" => self.variant.name().to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let s = &mut self.scenario;
        let p = &mut self.pipeline;
        match key {
            "seed" => {
                s.seed = parse(key, value)?;
                p.seed = s.seed;
            }
            "n_users" => s.n_users = parse(key, value)?,
            "n_products" => s.n_products = parse(key, value)?,
            "n_days" => s.n_days = parse(key, value)?,
            "fraud_fraction" => s.fraud_fraction = parse(key, value)?,
            "n_stocking_groups" => s.n_stocking_groups = parse(key, value)?,
            "n_cashback_groups" => s.n_cashback_groups = parse(key, value)?,
            "n_mixed_groups" => s.n_mixed_groups = parse(key, value)?,
            "group_size_min" => s.group_size_range.0 = parse(key, value)?,
            "group_size_max" => s.group_size_range.1 = parse(key, value)?,
            "normal_txn_rate" => s.normal_txn_rate = parse(key, value)?,
            "lambda" => p.lambda = parse(key, value)?,
            "window_days" => p.window_days = parse(key, value)?,
            "train_end_day" => p.train_end_day = day(key, value)?,
            "detect_end_day" => p.detect_end_day = day(key, value)?,
            "relation_dim" => p.dims.relation_dim = parse(key, value)?,
            "entity_dim" => p.entity_dim = parse(key, value)?,
            // derived from relation_dim; accepted so a full dump reads back
            "edge_dim" => {
                let v: usize = parse(key, value)?;
                if v != p.dims.edge_dim() {
                    bail!("edge_dim {v} must equal 8 x relation_dim = {}", p.dims.edge_dim());
                }
            }
            "node_dim" => p.dims.node_dim = parse(key, value)?,
            "attention_dim" => p.dims.attention_dim = parse(key, value)?,
            "heads" => p.dims.heads = parse(key, value)?,
            "hidden_dim" => p.dims.hidden_dim = parse(key, value)?,
            "latent_dim" => p.dims.latent_dim = parse(key, value)?,
            "margin" => p.margin = parse(key, value)?,
            "transr_epochs" => p.transr_epochs = parse(key, value)?,
            "transr_batch" => p.transr_batch = parse(key, value)?,
            "transr_learning_rate" => p.transr_learning_rate = parse(key, value)?,
            "learning_rate" => p.learning_rate = parse(key, value)?,
            "max_epochs" => p.max_epochs = parse(key, value)?,
            "check_every" => p.check_every = parse(key, value)?,
            "patience" => p.patience = parse(key, value)?,
            "split" => {
                let (a, b) = value
                    .split_once(':')
                    .ok_or_else(|| anyhow!("split must look like 5:2, got {value:?}"))?;
                p.train_parts = parse(key, a)?;
                p.val_parts = parse(key, b)?;
            }
            "relation_batch" => p.relation_batch = parse(key, value)?,
            "seed_quantile" => p.seed_quantile = parse(key, value)?,
            "propagation_threshold" => p.propagation_threshold = parse(key, value)?,
            "kappa" => p.kappa = parse(key, value)?,
            "commission" => p.commission = parse(key, value)?,
            "unknown_policy" => {
                self.policy = match value {
                    "exclude" => UnknownPolicy::Exclude,
                    "oracle" => UnknownPolicy::Oracle,
                    _ => bail!("unknown_policy must be exclude or oracle, got {value:?}"),
                }
            }
            "variant" => {
                self.variant =
                    Variant::from_name(value).ok_or_else(|| anyhow!("variant must be one of full, -R, -W, -P, got {value:?}"))?
            }
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment line. A key may appear
    /// once per text.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key=value", n + 1))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                bail!("{origin}:{}: duplicate key {k:?}", n + 1);
            }
            self.set(k, v).with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    /// Defaults, then environment, then file, then `--set` pairs.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        sets: &[String],
    ) -> Result<Config> {
        let mut cfg = Config::default();
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_ascii_lowercase(), v)))
            .collect();
        env.sort();
        for (k, v) in env {
            cfg.set(&k, &v).with_context(|| format!("environment variable {ENV_PREFIX}{}", k.to_ascii_uppercase()))?;
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        for pair in sets {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got {pair:?}"))?;
            cfg.set(k.trim(), v).with_context(|| format!("--set {pair}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.pipeline.validate()?;
        Ok(())
    }

    /// Canonical text: every key in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k}={}", self.get(k).expect("listed key"));
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
