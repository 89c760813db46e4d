//! Independent reference implementations shared by the integration and
//! acceptance tests. Nothing here calls into the library's graph or
//! gradient code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use abusegraph_core::tensor::ParamSet;
use abusegraph_core::{RelationKind, Transaction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per unordered pair: relation bits and weights.
pub type OracleGraph = BTreeMap<(String, String), ([bool; 8], [f64; 8])>;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Direct evaluation of the fused-graph definitions: for each user pair,
/// relation and day, scan both users' transactions for a same-product,
/// same-value match.
pub fn brute_force_graph(txns: &[Transaction], lambda: f64) -> OracleGraph {
    let users: BTreeSet<&str> = txns.iter().map(|t| t.user_id.as_str()).collect();
    let users: Vec<&str> = users.into_iter().collect();
    let days: BTreeSet<i64> = txns.iter().map(|t| t.day).collect();
    fn of<'a>(txns: &'a [Transaction], u: &'a str) -> impl Iterator<Item = &'a Transaction> + 'a {
        txns.iter().filter(move |t| t.user_id == u)
    }
    let mut out = OracleGraph::new();
    for (x, &i) in users.iter().enumerate() {
        for &j in &users[x + 1..] {
            let mut bits = [false; 8];
            let mut weights = [0.0; 8];
            for r in RelationKind::ALL {
                let k = r.index();
                let present = |u: &str, d: i64| of(txns, u).any(|t| t.day == d && t.relation_values[k].is_some());
                let mut pair = 0u32;
                let mut solo_i = 0u32;
                let mut solo_j = 0u32;
                for &d in &days {
                    solo_i += present(i, d) as u32;
                    solo_j += present(j, d) as u32;
                    let hit = of(txns, i).any(|a| {
                        a.day == d
                            && a.relation_values[k].is_some()
                            && of(txns, j).any(|b| {
                                b.day == d && b.product_id == a.product_id && b.relation_values[k] == a.relation_values[k]
                            })
                    });
                    pair += hit as u32;
                }
                if pair > 0 {
                    let m = solo_i.max(solo_j) as f64;
                    bits[k] = true;
                    weights[k] = pair as f64 / m * sigmoid(lambda * m);
                }
            }
            if bits.iter().any(|&b| b) {
                out.insert((i.to_string(), j.to_string()), (bits, weights));
            }
        }
    }
    out
}

/// Small random log with tiny value pools so that co-occurrence is common.
pub fn random_log(seed: u64, max_users: usize, max_days: i64) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = rng.gen_range(2..=max_users);
    let n_days = rng.gen_range(1..=max_days);
    let n_txns = rng.gen_range(1..=4 * n_users);
    (0..n_txns)
        .map(|k| {
            let mut t = Transaction::new(
                format!("t{k}"),
                format!("u{}", rng.gen_range(0..n_users)),
                format!("p{}", rng.gen_range(0..3)),
                rng.gen_range(1..=n_days),
            );
            for r in RelationKind::ALL {
                if rng.gen_bool(0.5) {
                    t = t.with_relation(r, format!("v{}", rng.gen_range(0..2)));
                }
            }
            t
        })
        .collect()
}

/// Outcome of one finite-difference probe.
#[derive(Debug, Clone)]
pub struct Probe {
    pub tensor: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a - n| / max(|a|, |n|, 1e-5)`. The floor keeps round-off in the
    /// difference quotient (about 1e-10 at step 1e-5) from dominating on
    /// near-zero components.
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(1e-5);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Central differences at `per_tensor` random coordinates of every tensor.
/// Coordinates whose one-sided slopes disagree straddle a kink (LeakyReLU,
/// L1, hinge or clamp) and are redrawn.
pub fn finite_difference<P, F>(params: &P, grad: &P, loss: F, per_tensor: usize, step: f64, seed: u64) -> Vec<Probe>
where
    P: ParamSet + Clone,
    F: Fn(&P) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = loss(params);
    let shapes: Vec<(&'static str, usize)> = params.tensors().iter().map(|(n, t)| (*n, t.len())).collect();
    let grads: Vec<Vec<f64>> = grad.tensors().iter().map(|(_, t)| t.to_vec()).collect();
    let mut probes = Vec::new();
    for (ti, &(name, len)) in shapes.iter().enumerate() {
        let mut taken = 0;
        let mut attempts = 0;
        while taken < per_tensor.min(len) && attempts < 50 * per_tensor {
            attempts += 1;
            let idx = rng.gen_range(0..len);
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[ti].1[idx] += delta;
                loss(&p)
            };
            let plus = eval(step);
            let minus = eval(-step);
            let right = (plus - base) / step;
            let left = (base - minus) / step;
            if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1e-6) {
                continue;
            }
            probes.push(Probe { tensor: name, index: idx, analytic: grads[ti][idx], numeric: (plus - minus) / (2.0 * step) });
            taken += 1;
        }
    }
    probes
}

/// Motivating example: dealer v4 organizes v3 online (chat, store,
/// promotion) and v5 offline (store, promotion, location); v1, v6, v7 are
/// weakly connected shoppers and v2 shares nothing with anyone.
pub fn motivating_example() -> Vec<Transaction> {
    use RelationKind::*;
    let t = |id: &str, u: &str, p: &str, d: i64| Transaction::new(id, u, p, d);
    vec![
        t("1", "v3", "p2", 1).with_relation(GroupId, "chat9").with_relation(RetailStore, "store4").with_relation(Promotion, "promo1"),
        t("2", "v3", "p3", 1).with_relation(GroupId, "chat9").with_relation(RetailStore, "store4").with_relation(Promotion, "promo1"),
        t("3", "v4", "p2", 1).with_relation(GroupId, "chat9").with_relation(RetailStore, "store4").with_relation(Promotion, "promo1"),
        t("4", "v4", "p3", 1).with_relation(GroupId, "chat9").with_relation(RetailStore, "store4").with_relation(Promotion, "promo1"),
        t("5", "v4", "p3", 2).with_relation(OrderLocation, "wx4g0").with_relation(RetailStore, "store4").with_relation(Promotion, "promo1"),
        t("6", "v4", "p4", 2).with_relation(OrderLocation, "wx4g0").with_relation(RetailStore, "store4").with_relation(Promotion, "promo1"),
        t("7", "v5", "p3", 2).with_relation(OrderLocation, "wx4g0").with_relation(RetailStore, "store4").with_relation(Promotion, "promo1"),
        t("8", "v5", "p4", 2).with_relation(OrderLocation, "wx4g0").with_relation(RetailStore, "store4").with_relation(Promotion, "promo1"),
        t("9", "v1", "p1", 1).with_relation(Coupon, "c1").with_relation(RetailStore, "store1"),
        t("10", "v6", "p1", 1).with_relation(Coupon, "c1").with_relation(RetailStore, "store2"),
        t("11", "v6", "p5", 3).with_relation(Delivery, "d7"),
        t("12", "v7", "p5", 3).with_relation(Delivery, "d7"),
        t("13", "v2", "p1", 2).with_relation(Coupon, "c1").with_relation(RetailStore, "store1"),
    ]
}

/// The library graph in the oracle's shape.
pub fn as_oracle(graph: &abusegraph_core::FusedGraph) -> OracleGraph {
    graph
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = (graph.users().id(e.a).to_string(), graph.users().id(e.b).to_string());
            let key = if a < b { (a, b) } else { (b, a) };
            let mut bits = [false; 8];
            for r in RelationKind::ALL {
                bits[r.index()] = e.relations.contains(r);
            }
            (key, (bits, e.weights))
        })
        .collect()
}

/// Largest absolute weight difference, or `None` when edge sets or bitmaps
/// differ.
pub fn oracle_distance(a: &OracleGraph, b: &OracleGraph) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for ((k1, (bits1, w1)), (k2, (bits2, w2))) in a.iter().zip(b) {
        if k1 != k2 || bits1 != bits2 {
            return None;
        }
        for (x, y) in w1.iter().zip(w2) {
            worst = worst.max((x - y).abs());
        }
    }
    Some(worst)
}

/// Ten-node graph with random relation masks and weights.
pub fn ten_node_graph(seed: u64) -> abusegraph_core::FusedGraph {
    use abusegraph_core::graph::{FusedGraph, RelationMask};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..10).map(|i| format!("n{i}")).collect();
    let mut edges = Vec::new();
    for i in 0..10 {
        for j in i + 1..10 {
            if j != i + 1 && !rng.gen_bool(0.25) {
                continue;
            }
            let mut mask = RelationMask::default();
            let mut w = [0.0; 8];
            for r in RelationKind::ALL {
                if rng.gen_bool(0.4) {
                    mask.insert(r);
                    w[r.index()] = rng.gen_range(0.05..0.95);
                }
            }
            if mask.count() == 0 {
                mask.insert(RelationKind::Promotion);
                w[RelationKind::Promotion.index()] = 0.5;
            }
            edges.push((i, j, mask, w));
        }
    }
    FusedGraph::from_edges(edges.iter().map(|&(i, j, m, w)| (names[i].as_str(), names[j].as_str(), m, w))).unwrap()
}

/// Finite-difference probes of the full training objective (labeled BCE,
/// unlabeled MSE and relation loss) on a ten-node graph.
pub fn model_gradient_probes(seed: u64, per_tensor: usize) -> Vec<Probe> {
    use abusegraph_core::model::{EdgeInputs, EdgeWeighting, ModelDims, ModelParams, NodeRole};
    use abusegraph_core::tensor::Matrix;
    use abusegraph_core::train::objective;
    use abusegraph_core::transr::{RelationEmbeddings, TransRParams, TripleSet};
    use abusegraph_core::Label;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = ten_node_graph(seed);
    let inputs = EdgeInputs::from_graph(&graph, EdgeWeighting::CoOccurrence);
    let relations = RelationEmbeddings::new(Matrix::uniform(8, 8, 0.5, &mut rng)).unwrap();
    let mut params = ModelParams::init(ModelDims::default(), relations, &mut rng).unwrap();
    // small generic values keep reconstruction losses away from the BCE clamp
    for v in params.node_base.iter_mut() {
        *v = rng.gen_range(-0.3..0.3);
    }
    let roles: Vec<NodeRole> = (0..10)
        .map(|i| match i {
            0..=2 => NodeRole::Train(Label::Fraud),
            3..=5 => NodeRole::Train(Label::Normal),
            9 => NodeRole::Held,
            _ => NodeRole::Unlabeled,
        })
        .collect();
    let mut transr = TransRParams::init(10, 8, 8, &mut rng);
    for p in transr.projections.iter_mut() {
        for v in p.data.iter_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
    }
    let triples = TripleSet::from_graph(&graph);
    let pos: Vec<_> = triples.triples().iter().copied().take(12).collect();
    let neg = triples.sample_negatives(&pos, &mut rng);
    let rel = Some((&transr, pos.as_slice(), neg.as_slice(), 1.0));
    let (_, grad, _) = objective(&params, &inputs, &roles, rel).unwrap();
    let loss = |p: &ModelParams| objective(p, &inputs, &roles, rel).unwrap().0.total;
    finite_difference(&params, &grad, loss, per_tensor, 1e-5, seed ^ 0x5eed)
}

/// Finite-difference probes of the TransR margin loss.
pub fn transr_gradient_probes(seed: u64, per_tensor: usize) -> Vec<Probe> {
    use abusegraph_core::transr::{margin_loss, margin_loss_grad, TransRParams, TripleSet};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = ten_node_graph(seed);
    let triples = TripleSet::from_graph(&graph);
    let mut params = TransRParams::init(10, 8, 8, &mut rng);
    for p in params.projections.iter_mut() {
        for v in p.data.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let pos: Vec<_> = triples.triples().to_vec();
    let neg = triples.sample_negatives(&pos, &mut rng);
    let mut grad = params.zeros_like();
    margin_loss_grad(&params, &pos, &neg, 1.0, 1.0, &mut grad).unwrap();
    let loss = |p: &TransRParams| margin_loss(p, &pos, &neg, 1.0).unwrap();
    finite_difference(&params, &grad, loss, per_tensor, 1e-5, seed ^ 0x7a45)
}
