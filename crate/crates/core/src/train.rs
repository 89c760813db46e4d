//! Full-graph training loop with a 5:2 labeled split, periodic validation
//! F1 and early stopping.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::select_seeds;
use crate::error::{Error, Result};
use crate::graph::FusedGraph;
use crate::model::{total_loss, EdgeInputs, EdgeWeighting, LossBreakdown, ModelDims, ModelParams, NodeRole};
use crate::optim::Adam;
use crate::tensor::ParamSet;
use crate::transr::{margin_loss_grad, RelationEmbeddings, TransRParams, Triple, TripleSet};
use crate::txn::{Label, LabelSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dims: ModelDims,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub check_every: usize,
    pub patience: usize,
    /// Labeled nodes are split `train_parts : val_parts`.
    pub train_parts: usize,
    pub val_parts: usize,
    /// Seed quantile used to threshold validation scores.
    pub seed_quantile: f64,
    pub weighting: EdgeWeighting,
    /// Positive triples sampled per epoch for the relation loss.
    pub relation_batch: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dims: ModelDims::default(),
            learning_rate: 1e-4,
            max_epochs: 2000,
            check_every: 100,
            patience: 5,
            train_parts: 5,
            val_parts: 2,
            seed_quantile: 0.012,
            weighting: EdgeWeighting::CoOccurrence,
            relation_batch: 1024,
            margin: 1.0,
            seed: 0,
        }
    }
}

/// Relation-loss state: TransR entities and projections plus the positive
/// triples of the training graph. The relation vectors themselves live in
/// [`ModelParams::relations`].
#[derive(Debug, Clone)]
pub struct RelationLoss {
    pub transr: TransRParams,
    pub triples: TripleSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub checks: Vec<Check>,
    /// Index into `checks` whose parameters were returned.
    pub best: usize,
    pub stopped_early: bool,
}

/// Assigns loss roles: labeled graph nodes are split per class into train and
/// validation parts; everything else is unlabeled.
pub fn split_roles(graph: &FusedGraph, labels: &LabelSet, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<NodeRole>> {
    let n = graph.node_count();
    let mut roles = vec![NodeRole::Unlabeled; n];
    for class in [Label::Normal, Label::Fraud] {
        let mut members: Vec<u32> = (0..n as u32)
            .filter(|&i| labels.get(graph.users().id(i)) == class)
            .collect();
        members.shuffle(rng);
        let parts = cfg.train_parts + cfg.val_parts;
        let mut n_train = (members.len() * cfg.train_parts + parts / 2) / parts.max(1);
        n_train = n_train.min(members.len().saturating_sub(1));
        if n_train == 0 || n_train == members.len() {
            return Err(Error::DegenerateSplit(alloc::format!(
                "{} labeled {:?} nodes cannot fill both splits",
                members.len(),
                class
            )));
        }
        for (k, &i) in members.iter().enumerate() {
            roles[i as usize] = if k < n_train { NodeRole::Train(class) } else { NodeRole::Held };
        }
    }
    Ok(roles)
}

/// Gradient of the full objective. Exposed for gradient checking.
pub fn objective(
    params: &ModelParams,
    inputs: &EdgeInputs,
    roles: &[NodeRole],
    relation: Option<(&TransRParams, &[Triple], &[Triple], f64)>,
) -> Result<(LossBreakdown, ModelParams, Option<TransRParams>)> {
    let mut grad = params.zeros_like();
    let mut tgrad = None;
    let mut relation_loss = 0.0;
    if let Some((transr, pos, neg, margin)) = relation {
        let mut view = transr.clone();
        view.relations = params.relations.vectors.clone();
        let mut g = view.zeros_like();
        let scale = if pos.is_empty() { 0.0 } else { 1.0 / pos.len() as f64 };
        relation_loss = margin_loss_grad(&view, pos, neg, margin, scale, &mut g)?;
        for (acc, v) in grad.relations.vectors.data.iter_mut().zip(&g.relations.data) {
            *acc += v;
        }
        tgrad = Some(g);
    }
    let fwd = params.forward(inputs);
    let (loss, dloss) = total_loss(&fwd.losses, roles, relation_loss);
    params.backward(inputs, &fwd, &dloss, &mut grad);
    Ok((loss, grad, tgrad))
}

/// Validation F1 of seed classification: a held-out node is predicted fraud
/// when it would be selected as a seed among all scored nodes.
pub fn validation_f1(scores: &[f64], roles: &[NodeRole], labels_of: impl Fn(usize) -> Label, quantile: f64) -> f64 {
    let seeds = select_seeds(scores, quantile);
    let mut predicted = vec![false; scores.len()];
    for s in seeds {
        predicted[s as usize] = true;
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (i, role) in roles.iter().enumerate() {
        if *role != NodeRole::Held {
            continue;
        }
        match (predicted[i], labels_of(i) == Label::Fraud) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    }
}

/// Parameters shared with the relation loss, bundled for the optimizer.
struct Joint<'a> {
    model: &'a mut ModelParams,
    transr: Option<&'a mut TransRParams>,
}

impl ParamSet for Joint<'_> {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = self.model.tensors();
        if let Some(t) = &self.transr {
            out.push(("transr.entities", &t.entities.data));
            out.extend(t.projections.iter().map(|p| ("transr.projection", p.data.as_slice())));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self.model.tensors_mut();
        if let Some(t) = self.transr.as_mut() {
            out.push(("transr.entities", &mut t.entities.data));
            out.extend(t.projections.iter_mut().map(|p| ("transr.projection", p.data.as_mut_slice())));
        }
        out
    }
}

struct JointGrad {
    model: ModelParams,
    transr: Option<TransRParams>,
}

impl ParamSet for JointGrad {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = self.model.tensors();
        if let Some(t) = &self.transr {
            out.push(("transr.entities", &t.entities.data));
            out.extend(t.projections.iter().map(|p| ("transr.projection", p.data.as_slice())));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        unreachable!("gradients are read-only for the optimizer")
    }
}

/// Trains the detection model on `graph`. With `relation_loss`, the relation
/// vectors are fine-tuned jointly with TransR entities and projections on a
/// fresh triple sample every epoch; without it the relation term is zero.
pub fn train(
    graph: &FusedGraph,
    relations: RelationEmbeddings,
    mut relation_loss: Option<RelationLoss>,
    labels: &LabelSet,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    if cfg.check_every == 0 {
        return Err(Error::Config("check_every must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(cfg.dims, relations, &mut rng)?;
    let roles = split_roles(graph, labels, cfg, &mut rng)?;
    let inputs = EdgeInputs::from_graph(graph, cfg.weighting);
    let label_of = |i: usize| labels.get(graph.users().id(i as u32));

    let mut opt = {
        let joint = Joint { model: &mut params, transr: relation_loss.as_mut().map(|r| &mut r.transr) };
        Adam::new(&joint, cfg.learning_rate)
    };
    let mut report = TrainReport::default();
    let mut best_params = params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut pos: Vec<Triple> = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let (loss, grad, tgrad) = match relation_loss.as_ref() {
            Some(rl) if !rl.triples.is_empty() => {
                let all = rl.triples.triples();
                pos.clear();
                for _ in 0..cfg.relation_batch.min(all.len()) {
                    pos.push(all[rng.gen_range(0..all.len())]);
                }
                let neg = rl.triples.sample_negatives(&pos, &mut rng);
                objective(&params, &inputs, &roles, Some((&rl.transr, &pos, &neg, cfg.margin)))?
            }
            _ => objective(&params, &inputs, &roles, None)?,
        };
        let grads = JointGrad { model: grad, transr: tgrad };
        {
            let mut joint = Joint { model: &mut params, transr: relation_loss.as_mut().map(|r| &mut r.transr) };
            opt.step(&mut joint, &grads);
        }

        if epoch % cfg.check_every == 0 {
            let scores = params.node_scores(&inputs);
            let val_f1 = validation_f1(&scores, &roles, label_of, cfg.seed_quantile);
            report.checks.push(Check { epoch, loss, val_f1 });
            if val_f1 >= best_f1 {
                best_params = params.clone();
                report.best = report.checks.len() - 1;
            }
            if val_f1 > best_f1 {
                best_f1 = val_f1;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    if report.checks.is_empty() {
        best_params = params;
    }
    if !best_params.all_finite() {
        return Err(Error::Config("training diverged to non-finite parameters".into()));
    }
    Ok((best_params, report))
}
