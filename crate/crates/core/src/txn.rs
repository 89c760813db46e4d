//! Transaction data model: relation dimensions, transactions, labels and
//! day windows.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// The eight attribute dimensions along which two users' transactions can
/// match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationKind {
    OrderLocation,
    ShareLink,
    Delivery,
    RetailStore,
    GroupId,
    Promotion,
    Coupon,
    Stimulation,
}

impl RelationKind {
    pub const COUNT: usize = 8;

    pub const ALL: [RelationKind; 8] = [
        RelationKind::OrderLocation,
        RelationKind::ShareLink,
        RelationKind::Delivery,
        RelationKind::RetailStore,
        RelationKind::GroupId,
        RelationKind::Promotion,
        RelationKind::Coupon,
        RelationKind::Stimulation,
    ];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Human-readable dimension name.
    pub const fn name(self) -> &'static str {
        match self {
            RelationKind::OrderLocation => "Order Location",
            RelationKind::ShareLink => "Share Link",
            RelationKind::Delivery => "Delivery",
            RelationKind::RetailStore => "Retail Store",
            RelationKind::GroupId => "Group ID",
            RelationKind::Promotion => "Promotion",
            RelationKind::Coupon => "Coupon",
            RelationKind::Stimulation => "Stimulation",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|r| r.name() == name)
    }

    /// Column tag used in files (`r1`..`r8`).
    pub fn tag(self) -> String {
        alloc::format!("r{}", self.index() + 1)
    }

    #[inline]
    pub const fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One purchase event.
#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub txn_id: String,
    pub user_id: String,
    pub product_id: String,
    /// Day index; time of day is not recorded.
    pub day: i64,
    pub quantity: u32,
    pub price: f64,
    pub gross_margin: Option<f64>,
    /// Indexed by [`RelationKind::index`]; `None` means the field was empty.
    pub relation_values: [Option<String>; RelationKind::COUNT],
}

impl Transaction {
    pub fn new(
        txn_id: impl Into<String>,
        user_id: impl Into<String>,
        product_id: impl Into<String>,
        day: i64,
    ) -> Self {
        Transaction {
            txn_id: txn_id.into(),
            user_id: user_id.into(),
            product_id: product_id.into(),
            day,
            quantity: 1,
            price: 0.0,
            gross_margin: None,
            relation_values: Default::default(),
        }
    }

    pub fn with_relation(mut self, kind: RelationKind, value: impl Into<String>) -> Self {
        self.relation_values[kind.index()] = Some(value.into());
        self
    }

    pub fn with_quantity(mut self, quantity: u32) -> Self {
        self.quantity = quantity;
        self
    }

    pub fn with_price(mut self, price: f64) -> Self {
        self.price = price;
        self
    }

    pub fn with_gross_margin(mut self, gm: f64) -> Self {
        self.gross_margin = Some(gm);
        self
    }

    #[inline]
    pub fn relation(&self, kind: RelationKind) -> Option<&str> {
        self.relation_values[kind.index()].as_deref()
    }

    /// Number of relation dimensions with a value.
    pub fn relation_count(&self) -> usize {
        self.relation_values.iter().filter(|v| v.is_some()).count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidTransaction {
            txn_id: self.txn_id.clone(),
            reason: reason.to_string(),
        };
        if self.quantity < 1 {
            return Err(bad("quantity must be at least 1"));
        }
        if !self.price.is_finite() || self.price < 0.0 {
            return Err(bad("price must be a non-negative number"));
        }
        if matches!(self.gross_margin, Some(gm) if !gm.is_finite()) {
            return Err(bad("gross margin must be finite"));
        }
        Ok(())
    }

    /// Sale revenue used for commission income.
    pub fn revenue(&self) -> f64 {
        self.price * f64::from(self.quantity)
    }
}

/// Ground-truth label of a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Normal,
    Fraud,
    Unknown,
}

impl Label {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Label::Fraud),
            0 => Some(Label::Normal),
            -1 => Some(Label::Unknown),
            _ => None,
        }
    }

    pub fn code(self) -> i8 {
        match self {
            Label::Fraud => 1,
            Label::Normal => 0,
            Label::Unknown => -1,
        }
    }

    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }
}

/// Labels keyed by user id. Absent users are [`Label::Unknown`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    labels: BTreeMap<String, Label>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a label. Returns `false` if the user already had one; the
    /// existing label is kept.
    pub fn insert(&mut self, user: impl Into<String>, label: Label) -> bool {
        use alloc::collections::btree_map::Entry;
        match self.labels.entry(user.into()) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(label);
                true
            }
        }
    }

    pub fn get(&self, user: &str) -> Label {
        self.labels.get(user).copied().unwrap_or(Label::Unknown)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Label)> {
        self.labels.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.values().filter(|l| **l == label).count()
    }
}

impl FromIterator<(String, Label)> for LabelSet {
    fn from_iter<I: IntoIterator<Item = (String, Label)>>(iter: I) -> Self {
        let mut set = LabelSet::new();
        for (u, l) in iter {
            set.labels.insert(u, l);
        }
        set
    }
}

/// Transactions with `end_day - days < day <= end_day`, in input order.
pub fn window(txns: &[Transaction], end_day: i64, days: i64) -> Result<Vec<Transaction>> {
    if days < 1 {
        return Err(Error::InvalidWindow(days));
    }
    let start = end_day - days;
    Ok(txns
        .iter()
        .filter(|t| t.day > start && t.day <= end_day)
        .cloned()
        .collect())
}

/// Largest day present in the log.
pub fn last_day(txns: &[Transaction]) -> Option<i64> {
    txns.iter().map(|t| t.day).max()
}
