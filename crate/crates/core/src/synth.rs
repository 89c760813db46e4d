//! Synthetic transaction logs: sparse background traffic plus planted
//! stocking-up, cashback-abuse and mixed fraud groups with ground truth.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rules::CashbackSchedule;
use crate::txn::{Label, LabelSet, RelationKind, Transaction};

use RelationKind::*;

/// Users per retail store in the background model.
const USERS_PER_STORE: usize = 50;
/// Share of fraud users that also emit ordinary transactions.
const FRAUD_BACKGROUND_SHARE: f64 = 0.82;
/// Share of pure-normal users that carry a normal label.
const NORMAL_LABEL_SHARE: f64 = 0.07;
const NORMAL_PROMO_CASHBACK: f64 = 0.5;
const GROUP_PROMO_CASHBACK: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub n_products: usize,
    pub n_days: usize,
    /// Upper bound on planted membership as a share of `n_users`.
    pub fraud_fraction: f64,
    pub n_stocking_groups: usize,
    pub n_cashback_groups: usize,
    pub n_mixed_groups: usize,
    /// Inclusive member-count range.
    pub group_size_range: (usize, usize),
    /// Mean background transactions per user per day.
    pub normal_txn_rate: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_users: 5000,
            n_products: 200,
            n_days: 14,
            fraud_fraction: 0.015,
            n_stocking_groups: 4,
            n_cashback_groups: 4,
            n_mixed_groups: 2,
            group_size_range: (5, 7),
            normal_txn_rate: 0.5,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn group_count(&self) -> usize {
        self.n_stocking_groups + self.n_cashback_groups + self.n_mixed_groups
    }

    /// Checks the user budget against the largest possible membership.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.group_size_range;
        let bad = |msg: String| Err(Error::InfeasibleScenario(msg));
        if lo < 2 || hi < lo {
            return bad(format!("group size range ({lo}, {hi}) must satisfy 2 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.fraud_fraction) {
            return bad(format!("fraud_fraction {} outside [0, 1]", self.fraud_fraction));
        }
        if self.n_users == 0 || self.n_products == 0 || self.n_days == 0 {
            return bad(String::from("users, products and days must be positive"));
        }
        if !(self.normal_txn_rate >= 0.0 && self.normal_txn_rate.is_finite()) {
            return bad(format!("normal_txn_rate {} must be non-negative", self.normal_txn_rate));
        }
        let budget = self.fraud_fraction * self.n_users as f64 + 1e-9;
        let planted = (self.group_count() * hi) as f64;
        if planted > budget {
            return bad(format!(
                "{} groups of up to {hi} members exceed the budget of {} fraud users",
                self.group_count(),
                libm::floor(budget)
            ));
        }
        if self.group_count() > 0 && self.n_products < 4 {
            return bad(String::from("planted groups need at least 4 products"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKind {
    Stocking,
    Cashback,
    Mixed,
}

impl GroupKind {
    pub fn name(self) -> &'static str {
        match self {
            GroupKind::Stocking => "stocking",
            GroupKind::Cashback => "cashback",
            GroupKind::Mixed => "mixed",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "stocking" => Some(GroupKind::Stocking),
            "cashback" => Some(GroupKind::Cashback),
            "mixed" => Some(GroupKind::Mixed),
            _ => None,
        }
    }

    fn stocks(self) -> bool {
        matches!(self, GroupKind::Stocking | GroupKind::Mixed)
    }

    fn harvests_cashback(self) -> bool {
        matches!(self, GroupKind::Cashback | GroupKind::Mixed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedGroup {
    pub id: String,
    pub kind: GroupKind,
    /// Sorted member ids, header included.
    pub members: Vec<String>,
    pub header: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruthGroups {
    pub groups: Vec<PlantedGroup>,
}

impl GroundTruthGroups {
    pub fn fraud_users(&self) -> BTreeSet<String> {
        self.groups.iter().flat_map(|g| g.members.iter().cloned()).collect()
    }

    pub fn of_kind(&self, kind: GroupKind) -> impl Iterator<Item = &PlantedGroup> {
        self.groups.iter().filter(move |g| g.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub transactions: Vec<Transaction>,
    pub labels: LabelSet,
    pub groups: GroundTruthGroups,
    /// Cashback paid per transaction for each promotion value.
    pub cashback: CashbackSchedule,
}

struct Catalog {
    prices: Vec<f64>,
    /// Products by ascending price.
    cheap: Vec<usize>,
    /// `promotions[p][week]`: whether product `p` runs a promotion that week.
    promotions: Vec<Vec<bool>>,
}

struct Profile {
    store: usize,
    location: usize,
}

struct Pools {
    stores: usize,
    locations: usize,
    deliveries: usize,
    links: usize,
    chats: usize,
    coupons: usize,
    campaigns: usize,
}

impl Pools {
    fn new(n_users: usize) -> Self {
        Pools {
            stores: (n_users / USERS_PER_STORE).max(1),
            locations: (n_users / 4).max(1),
            deliveries: (n_users / 2).max(1),
            links: n_users.max(1),
            chats: (n_users / 2).max(1),
            coupons: 40,
            campaigns: 10,
        }
    }
}

fn cents(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

fn user_id(i: usize, width: usize) -> String {
    format!("u{i:0width$}")
}

/// Generates a scenario. Identical configs give identical output.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pools = Pools::new(cfg.n_users);
    let width = digits(cfg.n_users.saturating_sub(1));
    let pwidth = digits(cfg.n_products.saturating_sub(1));
    let weeks = cfg.n_days.div_ceil(7);

    let prices: Vec<f64> = (0..cfg.n_products).map(|_| cents(rng.gen_range(5.0..50.0))).collect();
    let mut cheap: Vec<usize> = (0..cfg.n_products).collect();
    cheap.sort_by(|&a, &b| prices[a].partial_cmp(&prices[b]).unwrap().then(a.cmp(&b)));
    let promotions = (0..cfg.n_products)
        .map(|_| (0..weeks).map(|_| rng.gen_bool(0.4)).collect())
        .collect();
    let catalog = Catalog { prices, cheap, promotions };
    let profiles: Vec<Profile> = (0..cfg.n_users)
        .map(|_| Profile { store: rng.gen_range(0..pools.stores), location: rng.gen_range(0..pools.locations) })
        .collect();

    // Planted groups draw members from a shuffled user list.
    let mut order: Vec<usize> = (0..cfg.n_users).collect();
    order.shuffle(&mut rng);
    let kinds = core::iter::repeat(GroupKind::Stocking)
        .take(cfg.n_stocking_groups)
        .chain(core::iter::repeat(GroupKind::Cashback).take(cfg.n_cashback_groups))
        .chain(core::iter::repeat(GroupKind::Mixed).take(cfg.n_mixed_groups));
    let mut next = 0;
    let mut planted: Vec<(GroupKind, Vec<usize>)> = Vec::new();
    for kind in kinds {
        let size = rng.gen_range(cfg.group_size_range.0..=cfg.group_size_range.1);
        planted.push((kind, order[next..next + size].to_vec()));
        next += size;
    }
    let fraud: BTreeSet<usize> = order[..next].iter().copied().collect();
    let quiet: BTreeSet<usize> = order[..next]
        .iter()
        .copied()
        .filter(|_| !rng.gen_bool(FRAUD_BACKGROUND_SHARE))
        .collect();

    let mut cashback = CashbackSchedule::new();
    for p in 0..cfg.n_products {
        for w in 0..weeks {
            if catalog.promotions[p][w] {
                cashback.insert(promo_value(p, w, pwidth), NORMAL_PROMO_CASHBACK);
            }
        }
    }

    let mut out: Vec<Transaction> = Vec::new();
    let mut seq = 0usize;

    // Per-group plans are fixed up front so the day loop stays simple.
    let mut plans = Vec::new();
    let mut channel_turn = 0usize;
    for (g, (kind, members)) in planted.iter().enumerate() {
        let header = members[0];
        let bundle = pick_distinct(&mut rng, cfg.n_products, 2);
        let cheap_set: Vec<usize> = catalog.cheap[..catalog.cheap.len().min(5)].to_vec();
        let channel = if kind.stocks() {
            let c = [ShareLink, OrderLocation, GroupId][channel_turn % 3];
            channel_turn += 1;
            Some(c)
        } else {
            None
        };
        let stock_days = if kind.stocks() { active_days(&mut rng, cfg.n_days, 0.4, 2) } else { Vec::new() };
        let cash_days = if kind.harvests_cashback() { active_days(&mut rng, cfg.n_days, 0.8, 4) } else { Vec::new() };
        if kind.harvests_cashback() {
            cashback.insert(format!("gpromo-c{g:02}"), GROUP_PROMO_CASHBACK);
        }
        plans.push(GroupPlan { index: g, kind: *kind, members: members.clone(), header, bundle, cheap_set, channel, stock_days, cash_days });
    }

    for day in 1..=cfg.n_days {
        let week = (day - 1) / 7;
        for u in 0..cfg.n_users {
            if quiet.contains(&u) {
                continue;
            }
            let rate = cfg.normal_txn_rate;
            let mut n = libm::floor(rate) as usize;
            if rng.gen_bool(rate - libm::floor(rate)) {
                n += 1;
            }
            for _ in 0..n {
                let t = background(&mut rng, &catalog, &pools, &profiles[u], user_id(u, width), day, week, pwidth);
                out.push(t.with_id(seq));
                seq += 1;
            }
        }
        for plan in &plans {
            for t in plan.emit(&mut rng, &catalog, &profiles, day, width, pwidth) {
                out.push(t.with_id(seq));
                seq += 1;
            }
        }
    }

    let mut labels = LabelSet::new();
    let mut groups = GroundTruthGroups::default();
    for plan in &plans {
        let mut members: Vec<String> = plan.members.iter().map(|&u| user_id(u, width)).collect();
        members.sort();
        for m in &members {
            labels.insert(m.clone(), Label::Fraud);
        }
        groups.groups.push(PlantedGroup {
            id: format!("g{:02}", plan.index),
            kind: plan.kind,
            members,
            header: user_id(plan.header, width),
        });
    }
    let mut normals: Vec<usize> = (0..cfg.n_users).filter(|u| !fraud.contains(u)).collect();
    normals.shuffle(&mut rng);
    let labeled = libm::round(NORMAL_LABEL_SHARE * normals.len() as f64) as usize;
    let mut chosen: Vec<usize> = normals[..labeled].to_vec();
    chosen.sort_unstable();
    for u in chosen {
        labels.insert(user_id(u, width), Label::Normal);
    }

    Ok(Scenario { transactions: out, labels, groups, cashback })
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

fn promo_value(product: usize, week: usize, pwidth: usize) -> String {
    format!("promo-p{product:0pwidth$}-w{week}")
}

fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v = rand::seq::index::sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

/// Days active with probability `p`, topped up to at least `per_week`
/// days in every (possibly partial) week.
fn active_days(rng: &mut ChaCha8Rng, n_days: usize, p: f64, per_week: usize) -> Vec<usize> {
    let mut days: BTreeSet<usize> = (1..=n_days).filter(|_| rng.gen_bool(p)).collect();
    let mut start = 1;
    while start <= n_days {
        let end = (start + 6).min(n_days);
        let need = per_week.min(end - start + 1);
        let mut idle: Vec<usize> = (start..=end).filter(|d| !days.contains(d)).collect();
        idle.shuffle(rng);
        let have = (start..=end).filter(|d| days.contains(d)).count();
        for d in idle.into_iter().take(need.saturating_sub(have)) {
            days.insert(d);
        }
        start += 7;
    }
    days.into_iter().collect()
}

trait WithId {
    fn with_id(self, seq: usize) -> Transaction;
}

impl WithId for Transaction {
    fn with_id(mut self, seq: usize) -> Transaction {
        self.txn_id = format!("t{seq:07}");
        self
    }
}

#[allow(clippy::too_many_arguments)]
fn background(
    rng: &mut ChaCha8Rng,
    catalog: &Catalog,
    pools: &Pools,
    profile: &Profile,
    user: String,
    day: usize,
    week: usize,
    pwidth: usize,
) -> Transaction {
    let p = rng.gen_range(0..catalog.prices.len());
    let quantity = rng.gen_range(1..=3u32);
    let price = catalog.prices[p];
    let mut t = Transaction::new("", user, format!("p{p:0pwidth$}"), day as i64)
        .with_quantity(quantity)
        .with_price(price);
    let store = if rng.gen_bool(0.8) { profile.store } else { rng.gen_range(0..pools.stores) };
    t = t.with_relation(RetailStore, format!("s{store}"));
    if rng.gen_bool(0.9) {
        let loc = if rng.gen_bool(0.9) { profile.location } else { rng.gen_range(0..pools.locations) };
        t = t.with_relation(OrderLocation, format!("loc{loc}"));
    }
    if rng.gen_bool(0.5) {
        t = t.with_relation(Delivery, format!("dlv{}", rng.gen_range(0..pools.deliveries)));
    }
    if rng.gen_bool(0.05) {
        t = t.with_relation(ShareLink, format!("link{}", rng.gen_range(0..pools.links)));
    }
    if rng.gen_bool(0.05) {
        t = t.with_relation(GroupId, format!("chat{}", rng.gen_range(0..pools.chats)));
    }
    if rng.gen_bool(0.3) {
        t = t.with_relation(Coupon, format!("cpn{}", rng.gen_range(0..pools.coupons)));
    }
    if rng.gen_bool(0.2) {
        t = t.with_relation(Stimulation, format!("stim{}", rng.gen_range(0..pools.campaigns)));
    }
    let revenue = price * quantity as f64;
    let promoted = catalog.promotions[p][week] && rng.gen_bool(0.7);
    let gm = if promoted {
        t = t.with_relation(Promotion, promo_value(p, week, pwidth));
        -revenue * rng.gen_range(0.02..0.15)
    } else {
        revenue * rng.gen_range(0.05..0.3)
    };
    t.with_gross_margin(cents(gm))
}

struct GroupPlan {
    index: usize,
    kind: GroupKind,
    members: Vec<usize>,
    header: usize,
    bundle: Vec<usize>,
    cheap_set: Vec<usize>,
    channel: Option<RelationKind>,
    stock_days: Vec<usize>,
    cash_days: Vec<usize>,
}

impl GroupPlan {
    fn emit(
        &self,
        rng: &mut ChaCha8Rng,
        catalog: &Catalog,
        profiles: &[Profile],
        day: usize,
        width: usize,
        pwidth: usize,
    ) -> Vec<Transaction> {
        let g = self.index;
        let store = format!("s{}", profiles[self.header].store);
        let mut out = Vec::new();
        if self.stock_days.binary_search(&day).is_ok() {
            let channel_value = match self.channel {
                Some(ShareLink) => format!("glink-{g:02}-d{day}"),
                Some(OrderLocation) => format!("gloc-{g:02}"),
                _ => format!("gchat-{g:02}"),
            };
            for &u in &self.members {
                for &p in &self.bundle {
                    let quantity = rng.gen_range(6..=12u32);
                    let price = catalog.prices[p];
                    let revenue = price * quantity as f64;
                    let mut t = Transaction::new("", user_id(u, width), format!("p{p:0pwidth$}"), day as i64)
                        .with_quantity(quantity)
                        .with_price(price)
                        .with_relation(RetailStore, store.clone())
                        .with_relation(Promotion, format!("gpromo-s{g:02}"))
                        .with_relation(Delivery, format!("gpickup-{g:02}"))
                        .with_gross_margin(cents(-revenue * rng.gen_range(0.1..0.3)));
                    if let Some(c) = self.channel {
                        t = t.with_relation(c, channel_value.clone());
                    }
                    out.push(t);
                }
            }
        }
        if self.cash_days.binary_search(&day).is_ok() {
            let p = self.cheap_set[rng.gen_range(0..self.cheap_set.len())];
            for &u in &self.members {
                let quantity = rng.gen_range(1..=2u32);
                let price = catalog.prices[p];
                let revenue = price * quantity as f64;
                out.push(
                    Transaction::new("", user_id(u, width), format!("p{p:0pwidth$}"), day as i64)
                        .with_quantity(quantity)
                        .with_price(price)
                        .with_relation(RetailStore, store.clone())
                        .with_relation(Promotion, format!("gpromo-c{g:02}"))
                        .with_relation(Stimulation, format!("gstim-{g:02}"))
                        .with_relation(OrderLocation, format!("gstore-loc-{g:02}"))
                        .with_gross_margin(cents(-revenue * 0.1 - GROUP_PROMO_CASHBACK)),
                );
            }
        }
        out
    }
}

/// Random normal groups of the given sizes, each drawn from the customers
/// of one retail store, for cohesion baselines. Stores too small for a
/// requested size are skipped.
pub fn store_mate_groups(
    txns: &[Transaction],
    exclude: &BTreeSet<String>,
    sizes: &[usize],
    seed: u64,
) -> Vec<Vec<String>> {
    let mut by_store: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for t in txns {
        if exclude.contains(&t.user_id) {
            continue;
        }
        if let Some(s) = t.relation(RetailStore) {
            by_store.entry(s).or_default().insert(t.user_id.as_str());
        }
    }
    let stores: Vec<Vec<&str>> = by_store.into_values().map(|s| s.into_iter().collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &size in sizes {
        let fits: Vec<&Vec<&str>> = stores.iter().filter(|s| s.len() >= size).collect();
        if fits.is_empty() {
            continue;
        }
        let store = fits[rng.gen_range(0..fits.len())];
        let mut group: Vec<String> = store.choose_multiple(&mut rng, size).map(|u| String::from(*u)).collect();
        group.sort();
        out.push(group);
    }
    out
}
