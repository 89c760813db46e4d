//! On-disk formats. Every artifact this crate writes starts with a
//! `# config_hash=<hex>` line; readers accept any leading `#` lines and
//! report the hash when present.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use abusegraph_core::detect::{DetectionResult, StoreGroup, UserDetection};
use abusegraph_core::graph::RelationMask;
use abusegraph_core::model::{ModelDims, ModelParams};
use abusegraph_core::pipeline::{SweepPoint, TcsRow, Variant};
use abusegraph_core::rules::{CashbackSchedule, Metrics};
use abusegraph_core::synth::{GroundTruthGroups, GroupKind, PlantedGroup};
use abusegraph_core::tensor::{Matrix, ParamSet};
use abusegraph_core::train::TrainReport;
use abusegraph_core::transr::RelationEmbeddings;
use abusegraph_core::{FusedGraph, Label, LabelSet, RelationKind, Transaction};
use anyhow::{anyhow, bail, ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const R: usize = RelationKind::COUNT;
const HASH_KEY: &str = "# config_hash=";
pub const CHECKPOINT_MAGIC: &str = "abusegraph-checkpoint v1";

/// File contents with leading comment lines split off.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub hash: Option<String>,
    /// Number of comment lines removed; added back to reported line numbers.
    pub skipped: usize,
    pub body: String,
}

impl Artifact {
    pub fn parse(text: &str) -> Artifact {
        let mut hash = None;
        let mut skipped = 0;
        let mut rest = text;
        while rest.starts_with('#') {
            let (line, tail) = rest.split_once('\n').unwrap_or((rest, ""));
            if let Some(h) = line.strip_prefix(HASH_KEY) {
                hash = Some(h.trim().to_string());
            }
            skipped += 1;
            rest = tail;
        }
        Artifact { hash, skipped, body: rest.to_string() }
    }

    pub fn read(path: &Path) -> Result<Artifact> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Artifact::parse(&text))
    }
}

fn header(hash: Option<&str>) -> String {
    hash.map_or_else(String::new, |h| format!("{HASH_KEY}{h}\n"))
}

fn csv_reader(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes())
}

fn csv_text(hash: Option<&str>, head: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(head).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    header(hash) + &body
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[String], what: &str) -> Result<()> {
    let got: Vec<String> = reader.headers().context("reading header")?.iter().map(str::to_string).collect();
    ensure!(got == expected, "{what}: expected header {:?}, got {:?}", expected.join(","), got.join(","));
    Ok(())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn records<'a>(
    art: &'a Artifact,
    head: &[String],
    what: &'a str,
) -> Result<impl Iterator<Item = Result<(usize, csv::StringRecord)>> + 'a> {
    let mut reader = csv_reader(&art.body);
    check_header(&mut reader, head, what)?;
    let skipped = art.skipped;
    Ok(reader.into_records().map(move |r| {
        let rec = r.map_err(|e| anyhow!("{what}: {e}"))?;
        let line = rec.position().map_or(0, |p| p.line() as usize) + skipped;
        Ok((line, rec))
    }))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: usize, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|e| anyhow!("{what} line {line}: invalid {name} {raw:?}: {e}"))
}

fn float(x: f64) -> String {
    x.to_string()
}

fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(String::new, float)
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

// ---------------------------------------------------------------- transactions

pub fn transaction_header() -> Vec<String> {
    let mut h = strings(&["txn_id", "user_id", "product_id", "day", "quantity", "price", "gross_margin"]);
    h.extend(RelationKind::ALL.iter().map(|r| r.tag()));
    h
}

pub fn parse_transactions(art: &Artifact) -> Result<Vec<Transaction>> {
    const WHAT: &str = "transactions";
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for item in records(art, &transaction_header(), WHAT)? {
        let (line, rec) = item?;
        let id = rec[0].to_string();
        ensure!(!id.is_empty(), "{WHAT} line {line}: empty txn_id");
        ensure!(!rec[1].is_empty() && !rec[2].is_empty(), "{WHAT} line {line}: empty user_id or product_id");
        let quantity: i64 = field(&rec, 4, "quantity", line, WHAT)?;
        ensure!(quantity >= 1, "{WHAT} line {line}: quantity must be at least 1, got {quantity}");
        let mut t = Transaction::new(id.clone(), &rec[1], &rec[2], field(&rec, 3, "day", line, WHAT)?);
        t.quantity = u32::try_from(quantity).map_err(|_| anyhow!("{WHAT} line {line}: quantity too large"))?;
        t.price = field(&rec, 5, "price", line, WHAT)?;
        if !rec[6].trim().is_empty() {
            t.gross_margin = Some(field(&rec, 6, "gross_margin", line, WHAT)?);
        }
        for r in RelationKind::ALL {
            let v = &rec[7 + r.index()];
            if !v.is_empty() {
                t.relation_values[r.index()] = Some(v.to_string());
            }
        }
        t.validate().map_err(|e| anyhow!("{WHAT} line {line}: {e}"))?;
        ensure!(seen.insert(id.clone()), "{WHAT} line {line}: duplicate txn_id {id:?}");
        out.push(t);
    }
    Ok(out)
}

pub fn format_transactions(txns: &[Transaction], hash: Option<&str>) -> String {
    let rows = txns.iter().map(|t| {
        let mut row = vec![
            t.txn_id.clone(),
            t.user_id.clone(),
            t.product_id.clone(),
            t.day.to_string(),
            t.quantity.to_string(),
            float(t.price),
            opt_float(t.gross_margin),
        ];
        row.extend(t.relation_values.iter().map(|v| v.clone().unwrap_or_default()));
        row
    });
    csv_text(hash, &transaction_header(), rows)
}

// ---------------------------------------------------------------------- labels

pub fn parse_labels(art: &Artifact) -> Result<LabelSet> {
    const WHAT: &str = "labels";
    let mut set = LabelSet::new();
    for item in records(art, &strings(&["user_id", "label"]), WHAT)? {
        let (line, rec) = item?;
        let code: i64 = field(&rec, 1, "label", line, WHAT)?;
        let label = Label::from_code(code).ok_or_else(|| anyhow!("{WHAT} line {line}: label must be -1, 0 or 1, got {code}"))?;
        ensure!(set.insert(&rec[0], label), "{WHAT} line {line}: duplicate user {:?}", &rec[0]);
    }
    Ok(set)
}

pub fn format_labels(labels: &LabelSet, hash: Option<&str>) -> String {
    let rows = labels.iter().map(|(u, l)| vec![u.to_string(), l.code().to_string()]);
    csv_text(hash, &strings(&["user_id", "label"]), rows)
}

// ---------------------------------------------------------------------- groups

fn group_header() -> Vec<String> {
    strings(&["group_id", "user_id", "type", "is_header"])
}

pub fn parse_groups(art: &Artifact) -> Result<GroundTruthGroups> {
    const WHAT: &str = "groups";
    let mut groups: BTreeMap<String, PlantedGroup> = BTreeMap::new();
    let mut members = BTreeSet::new();
    for item in records(art, &group_header(), WHAT)? {
        let (line, rec) = item?;
        let kind = GroupKind::from_name(&rec[2]).ok_or_else(|| anyhow!("{WHAT} line {line}: unknown group type {:?}", &rec[2]))?;
        let is_header: u8 = field(&rec, 3, "is_header", line, WHAT)?;
        ensure!(is_header <= 1, "{WHAT} line {line}: is_header must be 0 or 1");
        let (gid, user) = (rec[0].to_string(), rec[1].to_string());
        ensure!(members.insert((gid.clone(), user.clone())), "{WHAT} line {line}: duplicate member {user:?}");
        let g = groups.entry(gid.clone()).or_insert_with(|| PlantedGroup {
            id: gid.clone(),
            kind,
            members: Vec::new(),
            header: String::new(),
        });
        ensure!(g.kind == kind, "{WHAT} line {line}: group {gid:?} has conflicting types");
        if is_header == 1 {
            ensure!(g.header.is_empty(), "{WHAT} line {line}: group {gid:?} has two headers");
            g.header = user.clone();
        }
        g.members.push(user);
    }
    let mut out = Vec::new();
    for (gid, mut g) in groups {
        ensure!(!g.header.is_empty(), "{WHAT}: group {gid:?} has no header");
        g.members.sort();
        out.push(g);
    }
    Ok(GroundTruthGroups { groups: out })
}

pub fn format_groups(groups: &GroundTruthGroups, hash: Option<&str>) -> String {
    let rows = groups.groups.iter().flat_map(|g| {
        g.members
            .iter()
            .map(move |u| vec![g.id.clone(), u.clone(), g.kind.name().to_string(), flag(*u == g.header)])
    });
    csv_text(hash, &group_header(), rows)
}

// -------------------------------------------------------------------- cashback

pub fn parse_cashback(art: &Artifact) -> Result<CashbackSchedule> {
    const WHAT: &str = "cashback schedule";
    let mut out = CashbackSchedule::new();
    for item in records(art, &strings(&["promotion", "cashback"]), WHAT)? {
        let (line, rec) = item?;
        let v: f64 = field(&rec, 1, "cashback", line, WHAT)?;
        ensure!(v.is_finite() && v >= 0.0, "{WHAT} line {line}: cashback must be non-negative");
        ensure!(out.insert(rec[0].to_string(), v).is_none(), "{WHAT} line {line}: duplicate promotion {:?}", &rec[0]);
    }
    Ok(out)
}

pub fn format_cashback(schedule: &CashbackSchedule, hash: Option<&str>) -> String {
    let rows = schedule.iter().map(|(p, v)| vec![p.clone(), float(*v)]);
    csv_text(hash, &strings(&["promotion", "cashback"]), rows)
}

// ----------------------------------------------------------------------- graph

fn graph_header() -> Vec<String> {
    let mut h = strings(&["user_i", "user_j", "m_bitmap_hex"]);
    h.extend((1..=R).map(|r| format!("w{r}")));
    h
}

pub fn format_graph(graph: &FusedGraph, hash: Option<&str>) -> String {
    let users = graph.users();
    let rows = graph.edges().iter().map(|e| {
        let mut row = vec![users.id(e.a).to_string(), users.id(e.b).to_string(), format!("{:02x}", e.relations)];
        row.extend(e.weights.iter().map(|w| float(*w)));
        row
    });
    csv_text(hash, &graph_header(), rows)
}

pub fn parse_graph(art: &Artifact) -> Result<FusedGraph> {
    const WHAT: &str = "graph";
    let mut edges = Vec::new();
    for item in records(art, &graph_header(), WHAT)? {
        let (line, rec) = item?;
        let bits = u8::from_str_radix(&rec[2], 16).map_err(|e| anyhow!("{WHAT} line {line}: bad bitmap {:?}: {e}", &rec[2]))?;
        let mut w = [0.0; R];
        for (r, slot) in w.iter_mut().enumerate() {
            *slot = field(&rec, 3 + r, "weight", line, WHAT)?;
        }
        edges.push((rec[0].to_string(), rec[1].to_string(), RelationMask(bits), w));
    }
    FusedGraph::from_edges(edges.iter().map(|(a, b, m, w)| (a.as_str(), b.as_str(), *m, *w)))
        .map_err(|e| anyhow!("{WHAT}: {e}"))
}

// ------------------------------------------------------------------- relations

fn relation_header(dim: usize) -> Vec<String> {
    let mut h = strings(&["relation_index"]);
    h.extend((1..=dim).map(|k| format!("e{k}")));
    h
}

pub fn format_relations(rel: &RelationEmbeddings, hash: Option<&str>) -> String {
    let rows = RelationKind::ALL.iter().map(|r| {
        let mut row = vec![(r.index() + 1).to_string()];
        row.extend(rel.get(*r).iter().map(|x| float(*x)));
        row
    });
    csv_text(hash, &relation_header(rel.dim()), rows)
}

pub fn parse_relations(art: &Artifact) -> Result<RelationEmbeddings> {
    const WHAT: &str = "relations";
    let mut reader = csv_reader(&art.body);
    let cols = reader.headers().context("reading header")?.len();
    ensure!(cols >= 2, "{WHAT}: need at least one embedding column");
    let dim = cols - 1;
    let mut data = Vec::new();
    for (k, item) in records(art, &relation_header(dim), WHAT)?.enumerate() {
        let (line, rec) = item?;
        let idx: usize = field(&rec, 0, "relation_index", line, WHAT)?;
        ensure!(idx == k + 1, "{WHAT} line {line}: expected relation_index {}, got {idx}", k + 1);
        for c in 1..=dim {
            data.push(field::<f64>(&rec, c, "component", line, WHAT)?);
        }
    }
    ensure!(data.len() == R * dim, "{WHAT}: expected {R} rows");
    RelationEmbeddings::new(Matrix::from_vec(R, dim, data)).map_err(|e| anyhow!("{WHAT}: {e}"))
}

// ------------------------------------------------------------------ checkpoint

/// Text checkpoint: magic line, hash line, dimensions, then one
/// `tensor <name> <len>` line followed by its values per parameter tensor.
pub fn format_checkpoint(params: &ModelParams, hash: Option<&str>) -> String {
    let d = &params.dims;
    let mut out = format!("{CHECKPOINT_MAGIC}\n{}", header(hash));
    let _ = writeln!(
        out,
        "dims relation_dim={} node_dim={} attention_dim={} heads={} hidden_dim={} latent_dim={}",
        d.relation_dim, d.node_dim, d.attention_dim, d.heads, d.hidden_dim, d.latent_dim
    );
    for (name, data) in params.tensors() {
        let _ = writeln!(out, "tensor {name} {}", data.len());
        let values: Vec<String> = data.iter().map(|x| float(*x)).collect();
        let _ = writeln!(out, "{}", values.join(" "));
    }
    out
}

pub fn parse_checkpoint(text: &str) -> Result<(ModelParams, Option<String>)> {
    const WHAT: &str = "checkpoint";
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
    let mut next = |expect: &str| lines.next().ok_or_else(|| anyhow!("{WHAT}: truncated, expected {expect}"));
    let (_, magic) = next("magic line")?;
    ensure!(magic == CHECKPOINT_MAGIC, "{WHAT}: not a v1 checkpoint (first line {magic:?})");
    let (mut n, mut line) = next("dims line")?;
    let mut hash = None;
    while line.starts_with('#') {
        if let Some(h) = line.strip_prefix(HASH_KEY) {
            hash = Some(h.trim().to_string());
        }
        (n, line) = next("dims line")?;
    }
    let dims_spec = line
        .strip_prefix("dims ")
        .ok_or_else(|| anyhow!("{WHAT} line {n}: expected dims line"))?;
    let mut dims = ModelDims::default();
    for kv in dims_spec.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("{WHAT} line {n}: bad dims entry {kv:?}"))?;
        let v: usize = v.parse().map_err(|e| anyhow!("{WHAT} line {n}: {k}: {e}"))?;
        match k {
            "relation_dim" => dims.relation_dim = v,
            "node_dim" => dims.node_dim = v,
            "attention_dim" => dims.attention_dim = v,
            "heads" => dims.heads = v,
            "hidden_dim" => dims.hidden_dim = v,
            "latent_dim" => dims.latent_dim = v,
            _ => bail!("{WHAT} line {n}: unknown dimension {k:?}"),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = ModelParams::init(dims, RelationEmbeddings::uniform(dims.relation_dim), &mut rng)
        .map_err(|e| anyhow!("{WHAT}: {e}"))?;
    for (name, slot) in params.tensors_mut() {
        let (n, head) = next("tensor line")?;
        let mut parts = head.split_whitespace();
        ensure!(parts.next() == Some("tensor"), "{WHAT} line {n}: expected tensor line");
        let got = parts.next().unwrap_or("");
        ensure!(got == name, "{WHAT} line {n}: expected tensor {name}, got {got:?}");
        let len: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| anyhow!("{WHAT} line {n}: missing tensor length"))?;
        ensure!(len == slot.len(), "{WHAT} line {n}: tensor {name} has {len} values, dims imply {}", slot.len());
        let (n, values) = next("tensor values")?;
        let mut count = 0;
        for (slot, v) in slot.iter_mut().zip(values.split_whitespace()) {
            *slot = v.parse().map_err(|e| anyhow!("{WHAT} line {n}: bad value {v:?}: {e}"))?;
            count += 1;
        }
        ensure!(count == len && values.split_whitespace().count() == len, "{WHAT} line {n}: expected {len} values");
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        bail!("{WHAT} line {n}: unexpected trailing content {extra:?}");
    }
    Ok((params, hash))
}

// ------------------------------------------------------------------ detections

fn detection_header() -> Vec<String> {
    strings(&["user_id", "score", "is_seed", "is_propagated", "prediction"])
}

pub fn format_detections(result: &DetectionResult, hash: Option<&str>) -> String {
    let rows = result.users.iter().map(|u| {
        vec![u.user_id.clone(), float(u.score), flag(u.is_seed), flag(u.is_propagated), flag(u.predicted())]
    });
    csv_text(hash, &detection_header(), rows)
}

pub fn parse_detections(art: &Artifact) -> Result<DetectionResult> {
    const WHAT: &str = "detections";
    let mut users = Vec::new();
    for item in records(art, &detection_header(), WHAT)? {
        let (line, rec) = item?;
        let bit = |i: usize, name: &str| -> Result<bool> {
            match field::<u8>(&rec, i, name, line, WHAT)? {
                0 => Ok(false),
                1 => Ok(true),
                v => bail!("{WHAT} line {line}: {name} must be 0 or 1, got {v}"),
            }
        };
        let u = UserDetection {
            user_id: rec[0].to_string(),
            score: field(&rec, 1, "score", line, WHAT)?,
            is_seed: bit(2, "is_seed")?,
            is_propagated: bit(3, "is_propagated")?,
        };
        ensure!(u.predicted() == bit(4, "prediction")?, "{WHAT} line {line}: prediction disagrees with flags");
        users.push(u);
    }
    Ok(DetectionResult { users })
}

pub fn format_store_groups(groups: &[StoreGroup], hash: Option<&str>) -> String {
    let rows = groups
        .iter()
        .flat_map(|g| g.users.iter().map(move |u| vec![g.store.clone(), u.clone()]));
    csv_text(hash, &strings(&["retail_store", "user_id"]), rows)
}

// -------------------------------------------------------------- reports/tables

pub fn format_train_log(report: &TrainReport, hash: Option<&str>) -> String {
    let rows = report.checks.iter().enumerate().map(|(k, c)| {
        vec![
            c.epoch.to_string(),
            float(c.loss.total),
            float(c.loss.relation),
            float(c.loss.labeled),
            float(c.loss.unlabeled),
            float(c.val_f1),
            flag(k == report.best),
        ]
    });
    csv_text(
        hash,
        &strings(&["epoch", "loss_total", "loss_relation", "loss_labeled", "loss_unlabeled", "val_f1", "best"]),
        rows,
    )
}

/// Rule verdicts for one detected store group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupVerdict {
    pub store: String,
    pub size: usize,
    pub stocking: bool,
    pub stocking_products: Vec<String>,
    /// `None` without a cashback schedule.
    pub cashback: Option<bool>,
    pub header_cashback_ratio: Option<f64>,
}

pub fn format_verdicts(verdicts: &[GroupVerdict], hash: Option<&str>) -> String {
    let rows = verdicts.iter().map(|v| {
        let tri = |b: Option<bool>| b.map_or_else(|| "na".to_string(), flag);
        vec![
            v.store.clone(),
            v.size.to_string(),
            flag(v.stocking),
            v.stocking_products.join(";"),
            tri(v.cashback),
            opt_float(v.header_cashback_ratio),
        ]
    });
    csv_text(
        hash,
        &strings(&["retail_store", "size", "stocking", "stocking_products", "cashback", "header_cashback_ratio"]),
        rows,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub config_hash: Option<String>,
    pub policy: String,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub predicted: usize,
    pub seeds: usize,
    pub propagated: usize,
    pub avoided_losses: Option<f64>,
    pub groups: Vec<GroupVerdict>,
}

impl MetricsReport {
    pub fn new(m: &Metrics, policy: &str, hash: Option<&str>) -> Self {
        MetricsReport {
            config_hash: hash.map(str::to_string),
            policy: policy.to_string(),
            tp: m.counts.tp,
            fp: m.counts.fp,
            tn: m.counts.tn,
            fn_: m.counts.fn_,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy,
            predicted: 0,
            seeds: 0,
            propagated: 0,
            avoided_losses: None,
            groups: Vec::new(),
        }
    }

    /// `key=value` lines; undefined values print as `undefined`.
    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "undefined".to_string(), float);
        let mut out = header(self.config_hash.as_deref());
        for (k, v) in [
            ("policy", self.policy.clone()),
            ("tp", self.tp.to_string()),
            ("fp", self.fp.to_string()),
            ("tn", self.tn.to_string()),
            ("fn", self.fn_.to_string()),
            ("precision", opt(self.precision)),
            ("recall", opt(self.recall)),
            ("f1", opt(self.f1)),
            ("accuracy", opt(self.accuracy)),
            ("predicted", self.predicted.to_string()),
            ("seeds", self.seeds.to_string()),
            ("propagated", self.propagated.to_string()),
            ("avoided_losses", opt(self.avoided_losses)),
            ("groups", self.groups.len().to_string()),
            ("stocking_groups", self.groups.iter().filter(|g| g.stocking).count().to_string()),
            ("cashback_groups", self.groups.iter().filter(|g| g.cashback == Some(true)).count().to_string()),
        ] {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data") + "\n"
    }
}

pub fn format_tcs(rows: &[TcsRow], hash: Option<&str>) -> String {
    let body = rows.iter().map(|r| {
        vec![
            (r.relation.index() + 1).to_string(),
            r.relation.name().to_string(),
            float(r.fraud),
            float(r.normal),
            float(r.fraud - r.normal),
        ]
    });
    csv_text(hash, &strings(&["relation_index", "relation", "fraud_tcs", "normal_tcs", "gap"]), body)
}

pub fn format_sweep(points: &[SweepPoint], hash: Option<&str>) -> String {
    let rows = points.iter().map(|p| {
        vec![
            float(p.threshold),
            opt_float(p.metrics.precision),
            opt_float(p.metrics.recall),
            opt_float(p.metrics.f1),
        ]
    });
    csv_text(hash, &strings(&["threshold", "precision", "recall", "f1"]), rows)
}

pub fn parse_sweep(art: &Artifact) -> Result<Vec<(f64, Option<f64>, Option<f64>, Option<f64>)>> {
    const WHAT: &str = "sweep";
    let mut out = Vec::new();
    for item in records(art, &strings(&["threshold", "precision", "recall", "f1"]), WHAT)? {
        let (line, rec) = item?;
        let opt = |i: usize, name: &str| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                field(&rec, i, name, line, WHAT).map(Some)
            }
        };
        out.push((field(&rec, 0, "threshold", line, WHAT)?, opt(1, "precision")?, opt(2, "recall")?, opt(3, "f1")?));
    }
    Ok(out)
}

pub fn format_ablation(rows: &[(u64, Variant, Metrics)], hash: Option<&str>) -> String {
    let mut body: Vec<Vec<String>> = rows
        .iter()
        .map(|(seed, v, m)| {
            vec![
                seed.to_string(),
                v.name().to_string(),
                opt_float(m.precision),
                opt_float(m.recall),
                opt_float(m.f1),
                opt_float(m.accuracy),
            ]
        })
        .collect();
    for v in Variant::ALL {
        let ms: Vec<&Metrics> = rows.iter().filter(|r| r.1 == v).map(|r| &r.2).collect();
        if ms.is_empty() {
            continue;
        }
        let mean = |f: fn(&Metrics) -> Option<f64>| {
            let vals: Vec<f64> = ms.iter().filter_map(|m| f(m)).collect();
            if vals.is_empty() {
                String::new()
            } else {
                float(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        };
        body.push(vec![
            "mean".to_string(),
            v.name().to_string(),
            mean(|m| m.precision),
            mean(|m| m.recall),
            mean(|m| m.f1),
            mean(|m| m.accuracy),
        ]);
    }
    csv_text(hash, &strings(&["seed", "variant", "precision", "recall", "f1", "accuracy"]), body)
}
