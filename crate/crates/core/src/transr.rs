//! TransR relation embeddings.
//!
//! Users are entities, relation dimensions are relations. Every co-occurrence
//! yields two positive triples, `(i, r, j)` and `(j, r, i)`. Only the learned
//! relation vectors leave this module; entity vectors are never exported.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{FusedGraph, RelationEvents};
use crate::math;
use crate::tensor::{Matrix, ParamSet};
use crate::txn::RelationKind;

const R: usize = RelationKind::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: u32,
    pub relation: RelationKind,
    pub tail: u32,
}

/// Positive triples over entities `0..entity_count`, sorted and unique.
#[derive(Debug, Clone, Default)]
pub struct TripleSet {
    pub entity_count: usize,
    triples: Vec<Triple>,
}

impl TripleSet {
    pub fn new(entity_count: usize, mut triples: Vec<Triple>) -> Self {
        triples.sort_unstable();
        triples.dedup();
        TripleSet { entity_count, triples }
    }

    /// Both orientations of every edge relation; entities are graph nodes.
    pub fn from_graph(graph: &FusedGraph) -> Self {
        let mut triples = Vec::new();
        for e in graph.edges() {
            for relation in e.relations.iter() {
                triples.push(Triple { head: e.a, relation, tail: e.b });
                triples.push(Triple { head: e.b, relation, tail: e.a });
            }
        }
        Self::new(graph.node_count(), triples)
    }

    /// Both orientations of every event; entities index `events.users`.
    pub fn from_events(events: &RelationEvents) -> Self {
        let mut triples = Vec::with_capacity(events.events.len() * 2);
        for e in &events.events {
            triples.push(Triple { head: e.a, relation: e.relation, tail: e.b });
            triples.push(Triple { head: e.b, relation: e.relation, tail: e.a });
        }
        Self::new(events.users.len(), triples)
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Corrupts the tail with a uniformly drawn entity, rejecting known
    /// positives and the head itself. Gives up after a bounded number of
    /// draws on very dense graphs and keeps the last candidate.
    pub fn corrupt<G: Rng + ?Sized>(&self, t: &Triple, rng: &mut G) -> Triple {
        let mut candidate = *t;
        if self.entity_count < 2 {
            return candidate;
        }
        for _ in 0..32 {
            candidate.tail = rng.gen_range(0..self.entity_count as u32);
            if candidate.tail != t.head && !self.contains(&candidate) {
                break;
            }
        }
        candidate
    }

    pub fn sample_negatives<G: Rng + ?Sized>(&self, positives: &[Triple], rng: &mut G) -> Vec<Triple> {
        positives.iter().map(|t| self.corrupt(t, rng)).collect()
    }
}

/// Learned relation vectors, one per [`RelationKind`] in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationEmbeddings {
    pub vectors: Matrix,
}

impl RelationEmbeddings {
    pub fn new(vectors: Matrix) -> Result<Self> {
        if vectors.rows != R {
            return Err(Error::Shape(alloc::format!("expected {R} relation vectors, got {}", vectors.rows)));
        }
        Ok(RelationEmbeddings { vectors })
    }

    /// Every entry `1/sqrt(dim)`.
    pub fn uniform(dim: usize) -> Self {
        RelationEmbeddings { vectors: Matrix::filled(R, dim, 1.0 / math::sqrt(dim as f64)) }
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn get(&self, r: RelationKind) -> &[f64] {
        self.vectors.row(r.index())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransRParams {
    /// `entity_count × d`.
    pub entities: Matrix,
    /// `8 × k`.
    pub relations: Matrix,
    /// One `d × k` projection per relation.
    pub projections: Vec<Matrix>,
}

impl TransRParams {
    /// Unit-norm random entities and relations, identity projections when
    /// `d == k` (random otherwise).
    pub fn init<G: Rng + ?Sized>(entity_count: usize, d: usize, k: usize, rng: &mut G) -> Self {
        let bound = 6.0 / math::sqrt(k as f64);
        let mut entities = Matrix::uniform(entity_count, d, bound, rng);
        let mut relations = Matrix::uniform(R, k, bound, rng);
        for i in 0..entity_count {
            normalize(entities.row_mut(i), true);
        }
        for i in 0..R {
            normalize(relations.row_mut(i), true);
        }
        let projections = (0..R)
            .map(|_| if d == k { Matrix::identity(d) } else { Matrix::xavier(d, k, rng) })
            .collect();
        TransRParams { entities, relations, projections }
    }

    pub fn entity_dim(&self) -> usize {
        self.entities.cols
    }

    pub fn relation_dim(&self) -> usize {
        self.relations.cols
    }

    pub fn entity_count(&self) -> usize {
        self.entities.rows
    }

    pub fn relation_embeddings(&self) -> RelationEmbeddings {
        RelationEmbeddings { vectors: self.relations.clone() }
    }

    fn check(&self, t: &Triple) -> Result<()> {
        for e in [t.head, t.tail] {
            if e as usize >= self.entity_count() {
                return Err(Error::UnknownEntity(e as usize));
            }
        }
        Ok(())
    }

    /// Translation residual `e_i W_r + e_r - e_j W_r`.
    fn residual(&self, t: &Triple) -> Vec<f64> {
        let w = &self.projections[t.relation.index()];
        let hi = w.vec_mul(self.entities.row(t.head as usize));
        let tj = w.vec_mul(self.entities.row(t.tail as usize));
        let er = self.relations.row(t.relation.index());
        (0..self.relation_dim()).map(|c| hi[c] + er[c] - tj[c]).collect()
    }

    /// L1 score of a triple; lower means more plausible.
    pub fn score(&self, t: &Triple) -> Result<f64> {
        self.check(t)?;
        Ok(self.residual(t).iter().map(|v| v.abs()).sum())
    }

    /// Adds `scale · ∂score/∂θ` to `grad`, with sign(0) = 0.
    fn accumulate_score_grad(&self, t: &Triple, scale: f64, grad: &mut TransRParams) {
        let res = self.residual(t);
        let g: Vec<f64> = res.iter().map(|v| scale * math::sign(*v)).collect();
        let r = t.relation.index();
        let w = &self.projections[r];
        for (acc, gi) in grad.relations.row_mut(r).iter_mut().zip(&g) {
            *acc += gi;
        }
        let mut back = vec![0.0; self.entity_dim()];
        w.mul_vec_into(&g, &mut back);
        for (acc, b) in grad.entities.row_mut(t.head as usize).iter_mut().zip(&back) {
            *acc += b;
        }
        for (acc, b) in grad.entities.row_mut(t.tail as usize).iter_mut().zip(&back) {
            *acc -= b;
        }
        let diff: Vec<f64> = self
            .entities
            .row(t.head as usize)
            .iter()
            .zip(self.entities.row(t.tail as usize))
            .map(|(a, b)| a - b)
            .collect();
        grad.projections[r].add_outer(&diff, &g, 1.0);
    }

    pub fn zeros_like(&self) -> TransRParams {
        TransRParams {
            entities: Matrix::zeros(self.entities.rows, self.entities.cols),
            relations: Matrix::zeros(self.relations.rows, self.relations.cols),
            projections: self.projections.iter().map(|p| Matrix::zeros(p.rows, p.cols)).collect(),
        }
    }

    /// Keeps entity and relation vectors inside the unit L2 ball.
    pub fn clamp_norms(&mut self) {
        for i in 0..self.entities.rows {
            normalize(self.entities.row_mut(i), false);
        }
        for i in 0..R {
            normalize(self.relations.row_mut(i), false);
        }
    }
}

impl ParamSet for TransRParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = vec![
            ("transr.entities", self.entities.data.as_slice()),
            ("transr.relations", self.relations.data.as_slice()),
        ];
        out.extend(self.projections.iter().map(|p| ("transr.projection", p.data.as_slice())));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = vec![
            ("transr.entities", self.entities.data.as_mut_slice()),
            ("transr.relations", self.relations.data.as_mut_slice()),
        ];
        out.extend(self.projections.iter_mut().map(|p| ("transr.projection", p.data.as_mut_slice())));
        out
    }
}

fn normalize(v: &mut [f64], always: bool) {
    let n = math::l2_norm(v);
    if n > 0.0 && (always || n > 1.0) {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// `Σ max(0, f(pos) + γ - f(neg))` over matched pairs.
pub fn margin_loss(params: &TransRParams, positives: &[Triple], negatives: &[Triple], margin: f64) -> Result<f64> {
    check_batch(positives, negatives, margin)?;
    let mut total = 0.0;
    for (p, n) in positives.iter().zip(negatives) {
        total += (params.score(p)? + margin - params.score(n)?).max(0.0);
    }
    Ok(total)
}

/// Margin loss times `scale`, accumulating `scale · ∂loss/∂θ` into `grad`.
pub fn margin_loss_grad(
    params: &TransRParams,
    positives: &[Triple],
    negatives: &[Triple],
    margin: f64,
    scale: f64,
    grad: &mut TransRParams,
) -> Result<f64> {
    check_batch(positives, negatives, margin)?;
    let mut total = 0.0;
    for (p, n) in positives.iter().zip(negatives) {
        let term = params.score(p)? + margin - params.score(n)?;
        if term > 0.0 {
            total += term;
            params.accumulate_score_grad(p, scale, grad);
            params.accumulate_score_grad(n, -scale, grad);
        }
    }
    Ok(scale * total)
}

fn check_batch(positives: &[Triple], negatives: &[Triple], margin: f64) -> Result<()> {
    if margin < 0.0 || margin.is_nan() {
        return Err(Error::NegativeMargin(margin));
    }
    if positives.len() != negatives.len() {
        return Err(Error::BatchMismatch { positives: positives.len(), negatives: negatives.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransRConfig {
    pub entity_dim: usize,
    pub relation_dim: usize,
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TransRConfig {
    fn default() -> Self {
        TransRConfig {
            entity_dim: 8,
            relation_dim: 8,
            margin: 1.0,
            epochs: 200,
            batch_size: 1024,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

/// Mini-batch SGD over a triple set. Exposed step by step so callers can
/// monitor held-out loss between epochs.
pub struct TransRTrainer<'a> {
    pub params: TransRParams,
    triples: &'a TripleSet,
    config: TransRConfig,
    order: Vec<Triple>,
    rng: ChaCha8Rng,
}

impl<'a> TransRTrainer<'a> {
    pub fn new(triples: &'a TripleSet, config: TransRConfig) -> Result<Self> {
        check_batch(&[], &[], config.margin)?;
        if config.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = TransRParams::init(triples.entity_count, config.entity_dim, config.relation_dim, &mut rng);
        Ok(TransRTrainer { params, triples, order: triples.triples().to_vec(), config, rng })
    }

    /// Trains on `positives` only (a subset of the set used for negative
    /// rejection). Returns the summed training loss of the epoch.
    pub fn epoch_on(&mut self, positives: &[Triple]) -> Result<f64> {
        self.order.clear();
        self.order.extend_from_slice(positives);
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let order = core::mem::take(&mut self.order);
        for batch in order.chunks(self.config.batch_size) {
            let negatives = self.triples.sample_negatives(batch, &mut self.rng);
            let mut grad = self.params.zeros_like();
            total += margin_loss_grad(&self.params, batch, &negatives, self.config.margin, 1.0, &mut grad)?;
            let lr = self.config.learning_rate;
            for ((_, p), (_, g)) in self.params.tensors_mut().into_iter().zip(grad.tensors()) {
                for (pv, gv) in p.iter_mut().zip(g) {
                    *pv -= lr * gv;
                }
            }
            self.params.clamp_norms();
        }
        self.order = order;
        Ok(total)
    }

    pub fn epoch(&mut self) -> Result<f64> {
        let all = self.triples.triples();
        self.epoch_on(all)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn into_params(self) -> TransRParams {
        self.params
    }
}

/// Full TransR training; returns the parameters (relation vectors are
/// [`TransRParams::relation_embeddings`]).
pub fn fit_transr(triples: &TripleSet, config: &TransRConfig) -> Result<TransRParams> {
    let mut trainer = TransRTrainer::new(triples, config.clone())?;
    for _ in 0..config.epochs {
        trainer.epoch()?;
    }
    Ok(trainer.into_params())
}

/// Trains on the symmetric triples of `events` and exports only the
/// relation vectors.
pub fn train_transr(events: &RelationEvents, config: &TransRConfig) -> Result<RelationEmbeddings> {
    let triples = TripleSet::from_events(events);
    if triples.is_empty() {
        return Err(Error::Config("no relation events to embed".into()));
    }
    Ok(fit_transr(&triples, config)?.relation_embeddings())
}
