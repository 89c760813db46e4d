//! From reconstruction losses to a fraudster list: top-quantile seeds,
//! single-pass propagation to seed neighbors, and retail-store grouping.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::FusedGraph;
use crate::math;
use crate::txn::{RelationKind, Transaction};

const R: usize = RelationKind::COUNT;

/// Number of seeds for `n` scored users: `ceil(quantile · n)`, ignoring
/// floating-point noise in the product.
pub fn seed_count(n: usize, quantile: f64) -> usize {
    let x = quantile * n as f64;
    let nearest = libm::round(x);
    let k = if (x - nearest).abs() < 1e-9 { nearest } else { math::ceil(x) };
    (k.max(0.0) as usize).min(n)
}

/// Indices of the `ceil(quantile · n)` largest scores. Ties go to the lower
/// index; callers keep indices in ascending user-id order so that this is
/// the ascending-id tie rule.
pub fn select_seeds(scores: &[f64], quantile: f64) -> Vec<u32> {
    let k = seed_count(scores.len(), quantile);
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// `α_ij · Σ_r w_r`.
pub fn propagation_score(alpha: f64, weights: &[f64; R]) -> f64 {
    alpha * weights.iter().sum::<f64>()
}

/// Non-seed neighbors `j` of some seed `i` with `p_ij > threshold`. Only one
/// hop: flagged users do not propagate further. `alpha` is indexed by edge.
pub fn propagate(graph: &FusedGraph, seeds: &[u32], alpha: &[f64], threshold: f64) -> BTreeSet<u32> {
    let seed_set: BTreeSet<u32> = seeds.iter().copied().collect();
    let mut flagged = BTreeSet::new();
    for &i in seeds {
        for &(j, e) in graph.neighbors(i) {
            if seed_set.contains(&j) {
                continue;
            }
            let edge = &graph.edges()[e as usize];
            if propagation_score(alpha[e as usize], &edge.weights) > threshold {
                flagged.insert(j);
            }
        }
    }
    flagged
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserDetection {
    pub user_id: String,
    pub score: f64,
    pub is_seed: bool,
    pub is_propagated: bool,
}

impl UserDetection {
    pub fn predicted(&self) -> bool {
        self.is_seed || self.is_propagated
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionResult {
    /// One row per graph node, in ascending user-id order.
    pub users: Vec<UserDetection>,
}

impl DetectionResult {
    pub fn new(graph: &FusedGraph, scores: &[f64], seeds: &[u32], propagated: &BTreeSet<u32>) -> Self {
        let seeds: BTreeSet<u32> = seeds.iter().copied().collect();
        let users = (0..graph.node_count() as u32)
            .map(|i| UserDetection {
                user_id: String::from(graph.users().id(i)),
                score: scores[i as usize],
                is_seed: seeds.contains(&i),
                is_propagated: propagated.contains(&i) && !seeds.contains(&i),
            })
            .collect();
        DetectionResult { users }
    }

    pub fn predicted(&self) -> BTreeSet<String> {
        self.users.iter().filter(|u| u.predicted()).map(|u| u.user_id.clone()).collect()
    }

    pub fn seeds(&self) -> BTreeSet<String> {
        self.users.iter().filter(|u| u.is_seed).map(|u| u.user_id.clone()).collect()
    }

    /// Same detection with propagation removed.
    pub fn seeds_only(&self) -> Self {
        let users = self
            .users
            .iter()
            .map(|u| UserDetection { is_propagated: false, ..u.clone() })
            .collect();
        DetectionResult { users }
    }
}

/// A retail store and the detected users who transacted there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreGroup {
    pub store: String,
    pub users: BTreeSet<String>,
}

/// Groups predicted users by every retail store they transacted with.
/// Largest groups first, ties by store id.
pub fn group_detections(predicted: &BTreeSet<String>, txns: &[Transaction]) -> Vec<StoreGroup> {
    let mut by_store: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for t in txns {
        if let Some(store) = t.relation(RelationKind::RetailStore) {
            if predicted.contains(&t.user_id) {
                by_store.entry(store).or_default().insert(t.user_id.clone());
            }
        }
    }
    let mut groups: Vec<StoreGroup> = by_store
        .into_iter()
        .map(|(s, users)| StoreGroup { store: String::from(s), users })
        .collect();
    groups.sort_by(|a, b| b.users.len().cmp(&a.users.len()).then_with(|| a.store.cmp(&b.store)));
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RelationMask;
    use alloc::vec;

    #[test]
    fn seed_counts() {
        assert_eq!(seed_count(1000, 0.012), 12);
        assert_eq!(seed_count(10, 0.012), 1);
        assert_eq!(seed_count(1001, 0.012), 13);
        assert_eq!(seed_count(0, 0.5), 0);
        assert_eq!(select_seeds(&[], 0.5), Vec::<u32>::new());
    }

    #[test]
    fn ties_break_towards_low_index() {
        assert_eq!(select_seeds(&[1.0; 100], 0.03), vec![0, 1, 2]);
        let mut scores = vec![0.0; 10];
        scores[7] = 3.0;
        assert_eq!(select_seeds(&scores, 0.012), vec![7]);
    }

    #[test]
    fn propagation_score_cases() {
        assert_eq!(propagation_score(0.0, &[1.0; R]), 0.0);
        let w = [1.0, 1.0, 1.0, 0.25, 0.0, 0.0, 0.0, 0.0];
        assert!((propagation_score(0.2, &w) - 0.65).abs() < 1e-15);
        let mut w = [0.0; R];
        w[5] = 0.8;
        assert_eq!(propagation_score(1.0, &w), 0.8);
    }

    fn chain() -> FusedGraph {
        let mut w = [0.0; R];
        w[0] = 0.9;
        let m = RelationMask(1);
        FusedGraph::from_edges([("s", "a", m, w), ("a", "b", m, w)]).unwrap()
    }

    #[test]
    fn propagation_is_single_pass() {
        let g = chain();
        let s = g.node("s").unwrap();
        let a = g.node("a").unwrap();
        let alpha = vec![1.0; g.edges().len()];
        let flagged = propagate(&g, &[s], &alpha, 0.5);
        assert_eq!(flagged.into_iter().collect::<Vec<_>>(), vec![a]);
    }

    #[test]
    fn propagation_threshold_is_strict() {
        let g = chain();
        let s = g.node("s").unwrap();
        // p = alpha · 0.9 == 0.65 exactly is not enough
        let alpha = vec![0.65 / 0.9; 2];
        let p = propagation_score(alpha[0], &g.edges()[0].weights);
        assert!(propagate(&g, &[s], &alpha, p).is_empty());
        assert!(propagate(&g, &[s], &[0.0, 0.0], 0.65).is_empty());
    }

    #[test]
    fn grouping_by_store() {
        let txns = vec![
            Transaction::new("1", "u1", "p", 1).with_relation(RelationKind::RetailStore, "S"),
            Transaction::new("2", "u2", "p", 1).with_relation(RelationKind::RetailStore, "S"),
            Transaction::new("3", "u2", "p", 2).with_relation(RelationKind::RetailStore, "T"),
            Transaction::new("4", "u3", "p", 2).with_relation(RelationKind::RetailStore, "T"),
        ];
        let predicted: BTreeSet<String> = ["u1", "u2"].iter().map(|s| String::from(*s)).collect();
        let groups = group_detections(&predicted, &txns);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].store, "S");
        assert_eq!(groups[0].users.len(), 2);
        assert_eq!(groups[1].users.iter().collect::<Vec<_>>(), vec!["u2"]);
        assert!(group_detections(&BTreeSet::new(), &txns).is_empty());
    }
}
