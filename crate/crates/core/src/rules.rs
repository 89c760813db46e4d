//! Group-type rules (stocking up, cashback abuse), detection metrics and the
//! avoided-loss figure.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::txn::{Label, LabelSet, RelationKind, Transaction};

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Moments { mean, std: math::sqrt(var) })
    }

    /// `mean + kappa · std`.
    pub fn bound(&self, kappa: f64) -> f64 {
        self.mean + kappa * self.std
    }
}

/// Per-user total quantity per product over promoted transactions.
fn promoted_quantities<'a>(txns: impl IntoIterator<Item = &'a Transaction>) -> BTreeMap<(&'a str, &'a str), u64> {
    let mut q = BTreeMap::new();
    for t in txns {
        if t.relation(RelationKind::Promotion).is_some() {
            *q.entry((t.product_id.as_str(), t.user_id.as_str())).or_insert(0) += u64::from(t.quantity);
        }
    }
    q
}

/// Reference statistics for both rules.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleStats {
    /// Per product: moments of normal users' promoted quantity.
    pub quantity: BTreeMap<String, Moments>,
    /// Moments over all products, for products no normal user bought.
    pub pooled: Option<Moments>,
    /// Moments of normal headers' cashback ratio.
    pub cashback_ratio: Moments,
    pub kappa: f64,
}

impl RuleStats {
    /// Quantity moments from users labeled normal; cashback-ratio moments
    /// from stores none of whose customers is labeled fraud.
    pub fn from_population(
        txns: &[Transaction],
        labels: &LabelSet,
        schedule: &CashbackSchedule,
        commission: f64,
        kappa: f64,
    ) -> Self {
        let normal = txns.iter().filter(|t| labels.get(&t.user_id) == Label::Normal);
        let mut per_product: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut all = Vec::new();
        for ((p, _), q) in promoted_quantities(normal) {
            per_product.entry(p).or_default().push(q as f64);
            all.push(q as f64);
        }
        let quantity = per_product
            .into_iter()
            .filter_map(|(p, v)| Moments::of(&v).map(|m| (String::from(p), m)))
            .collect();

        let mut by_store: BTreeMap<&str, Vec<&Transaction>> = BTreeMap::new();
        for t in txns {
            if let Some(s) = t.relation(RelationKind::RetailStore) {
                by_store.entry(s).or_default().push(t);
            }
        }
        let ratios: Vec<f64> = by_store
            .values()
            .filter(|ts| ts.iter().all(|t| labels.get(&t.user_id) != Label::Fraud))
            .map(|ts| HeaderIncome::compute(ts.iter().copied(), schedule, commission).ratio())
            .collect();
        RuleStats {
            quantity,
            pooled: Moments::of(&all),
            cashback_ratio: Moments::of(&ratios).unwrap_or_default(),
            kappa,
        }
    }
}

/// Stocking-up rule: flagged when some product's group-average promoted
/// quantity reaches `μ + κσ` of normal users. Returns the witnesses.
pub fn rule1_flag<'a>(group: &[&str], txns: impl IntoIterator<Item = &'a Transaction>, stats: &RuleStats) -> (bool, Vec<String>) {
    if group.is_empty() {
        return (false, Vec::new());
    }
    let members: BTreeSet<&str> = group.iter().copied().collect();
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for ((p, u), q) in promoted_quantities(txns) {
        if members.contains(u) {
            *totals.entry(p).or_insert(0) += q;
        }
    }
    let size = members.len() as f64;
    let witnesses: Vec<String> = totals
        .into_iter()
        .filter(|(p, total)| {
            stats
                .quantity
                .get(*p)
                .or(stats.pooled.as_ref())
                .is_some_and(|m| *total as f64 / size >= m.bound(stats.kappa))
        })
        .map(|(p, _)| String::from(p))
        .collect();
    (!witnesses.is_empty(), witnesses)
}

/// Cashback paid per transaction, keyed by promotion value.
pub type CashbackSchedule = BTreeMap<String, f64>;

/// Income split of a header (retail-store owner).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeaderIncome {
    pub cashback: f64,
    pub regular: f64,
}

impl HeaderIncome {
    /// `c(h)` sums scheduled cashback; `r(h)` is `commission · Σ revenue`.
    pub fn compute<'a>(txns: impl IntoIterator<Item = &'a Transaction>, schedule: &CashbackSchedule, commission: f64) -> Self {
        let mut income = HeaderIncome::default();
        for t in txns {
            if let Some(c) = t.relation(RelationKind::Promotion).and_then(|p| schedule.get(p)) {
                income.cashback += c;
            }
            income.regular += commission * t.revenue();
        }
        income
    }

    pub fn total(&self) -> f64 {
        self.cashback + self.regular
    }

    /// `c / (c + r)`, or 0 when the header has no income.
    pub fn ratio(&self) -> f64 {
        let total = self.total();
        if total > 0.0 {
            self.cashback / total
        } else {
            0.0
        }
    }
}

/// Cashback-abuse rule on a header's income.
pub fn rule2_flag(income: &HeaderIncome, stats: &RuleStats) -> bool {
    if income.total() <= 0.0 {
        return false;
    }
    income.ratio() >= stats.cashback_ratio.bound(stats.kappa)
}

/// Transactions of the store a header operates.
pub fn store_transactions<'a>(txns: &'a [Transaction], store: &'a str) -> impl Iterator<Item = &'a Transaction> + 'a {
    txns.iter().filter(move |t| t.relation(RelationKind::RetailStore) == Some(store))
}

/// The store where a user placed most transactions (ties: smallest id).
pub fn home_store<'a>(txns: &'a [Transaction], user: &str) -> Option<&'a str> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in txns.iter().filter(|t| t.user_id == user) {
        if let Some(s) = t.relation(RelationKind::RetailStore) {
            *counts.entry(s).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(&str, usize)>, (s, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((s, c)),
        })
        .map(|(s, _)| s)
}

/// How users without a label are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownPolicy {
    /// Only labeled users count.
    #[default]
    Exclude,
    /// Unknown users are fraud iff they belong to a ground-truth group.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub counts: Confusion,
    /// `None` when the denominator is zero.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

impl Metrics {
    pub fn from_counts(c: Confusion) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Metrics {
            counts: c,
            precision,
            recall,
            f1,
            accuracy: ratio(c.tp + c.tn, c.tp + c.fp + c.tn + c.fn_),
        }
    }

    /// F1 with the undefined case read as zero.
    pub fn f1_or_zero(&self) -> f64 {
        self.f1.unwrap_or(0.0)
    }
}

/// Scores `predicted` over `universe`. Under [`UnknownPolicy::Oracle`],
/// `truth_groups` supplies the fraud status of unlabeled users.
pub fn metrics<'a>(
    predicted: &BTreeSet<String>,
    universe: impl IntoIterator<Item = &'a str>,
    labels: &LabelSet,
    policy: UnknownPolicy,
    truth_groups: &BTreeSet<String>,
) -> Metrics {
    let mut c = Confusion::default();
    for u in universe {
        let truth = match (labels.get(u), policy) {
            (Label::Fraud, _) => true,
            (Label::Normal, _) => false,
            (Label::Unknown, UnknownPolicy::Exclude) => continue,
            (Label::Unknown, UnknownPolicy::Oracle) => truth_groups.contains(u),
        };
        match (predicted.contains(u), truth) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Metrics::from_counts(c)
}

/// Avoided loss: the negated gross-margin sum of blocked transactions.
pub fn avoided_losses<'a>(blocked: impl IntoIterator<Item = &'a Transaction>) -> Result<f64> {
    let mut total = 0.0;
    for t in blocked {
        total += t.gross_margin.ok_or_else(|| Error::MissingGrossMargin(t.txn_id.clone()))?;
    }
    Ok(-total)
}
