//! Attention aggregation over weighted-concatenation edge features followed
//! by a semi-supervised autoencoder, with hand-written reverse-mode
//! gradients.
//!
//! Every node starts from the same learnable base vector, so the aggregated
//! feature of node `i` is `(Σ_j α_ij) · base`. Attention is the mean over
//! heads of `LeakyReLU((base W_k) · (f_ij W))`; there is no softmax and no
//! self loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{FusedGraph, RelationMask};
use crate::math::{self, leaky_relu, leaky_relu_grad};
use crate::tensor::{Dense, Matrix, ParamSet};
use crate::transr::RelationEmbeddings;
use crate::txn::{Label, RelationKind};

const R: usize = RelationKind::COUNT;

/// Clamp applied to the BCE input.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub relation_dim: usize,
    pub node_dim: usize,
    pub attention_dim: usize,
    pub heads: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            relation_dim: 8,
            node_dim: 52,
            attention_dim: 8,
            heads: 3,
            hidden_dim: 32,
            latent_dim: 16,
        }
    }
}

impl ModelDims {
    pub fn edge_dim(&self) -> usize {
        R * self.relation_dim
    }
}

/// How relation weights enter the edge feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeWeighting {
    /// Block `r` is `w_r · e_r`.
    #[default]
    CoOccurrence,
    /// Block `r` is `e_r` whenever the relation bit is set.
    Unit,
}

/// Weighted concatenation of relation vectors: block `r` is `w_r · e_r`
/// where the relation bit is set and zero elsewhere.
pub fn edge_feature(mask: RelationMask, weights: &[f64; R], relations: &RelationEmbeddings) -> Vec<f64> {
    let d = relations.dim();
    let mut f = vec![0.0; R * d];
    for r in mask.iter() {
        let block = &mut f[r.index() * d..(r.index() + 1) * d];
        for (o, e) in block.iter_mut().zip(relations.get(r)) {
            *o = weights[r.index()] * e;
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// Shared initial node feature (all-ones input through a linear layer).
    pub node_base: Vec<f64>,
    /// `heads × (node_dim × attention_dim)`.
    pub heads: Vec<Matrix>,
    /// `edge_dim × attention_dim`.
    pub edge_proj: Matrix,
    pub enc1: Dense,
    pub enc2: Dense,
    pub dec1: Dense,
    pub dec2: Dense,
    /// Relation vectors used to build edge features; fine-tuned in training.
    pub relations: RelationEmbeddings,
}

impl ModelParams {
    pub fn init<G: Rng + ?Sized>(dims: ModelDims, relations: RelationEmbeddings, rng: &mut G) -> Result<Self> {
        if relations.dim() != dims.relation_dim {
            return Err(Error::Shape(alloc::format!(
                "relation vectors have dim {}, model expects {}",
                relations.dim(),
                dims.relation_dim
            )));
        }
        Ok(ModelParams {
            dims,
            node_base: vec![1.0; dims.node_dim],
            heads: (0..dims.heads)
                .map(|_| Matrix::xavier(dims.node_dim, dims.attention_dim, rng))
                .collect(),
            edge_proj: Matrix::xavier(dims.edge_dim(), dims.attention_dim, rng),
            enc1: Dense::new(dims.node_dim, dims.hidden_dim, rng),
            enc2: Dense::new(dims.hidden_dim, dims.latent_dim, rng),
            dec1: Dense::new(dims.latent_dim, dims.hidden_dim, rng),
            dec2: Dense::new(dims.hidden_dim, dims.node_dim, rng),
            relations,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.input(), d.output());
        ModelParams {
            dims: self.dims,
            node_base: vec![0.0; self.node_base.len()],
            heads: self.heads.iter().map(|h| Matrix::zeros(h.rows, h.cols)).collect(),
            edge_proj: Matrix::zeros(self.edge_proj.rows, self.edge_proj.cols),
            enc1: z(&self.enc1),
            enc2: z(&self.enc2),
            dec1: z(&self.dec1),
            dec2: z(&self.dec2),
            relations: RelationEmbeddings {
                vectors: Matrix::zeros(R, self.relations.dim()),
            },
        }
    }

    /// Attention score of one edge given the source node feature.
    pub fn attention_score(&self, h: &[f64], f: &[f64]) -> f64 {
        let z = self.edge_proj.vec_mul(f);
        let total: f64 = self
            .heads
            .iter()
            .map(|w| leaky_relu(math::dot(&w.vec_mul(h), &z)))
            .sum();
        total / self.heads.len() as f64
    }

    /// Autoencoder pass: returns the reconstruction and its L2 error.
    pub fn reconstruct(&self, h: &[f64]) -> (Vec<f64>, f64) {
        let mut cache = AeCache::new(&self.dims);
        self.ae_forward(h, &mut cache);
        let loss = math::l2_norm(&cache.residual);
        (cache.out, loss)
    }

    fn ae_forward(&self, x: &[f64], c: &mut AeCache) {
        self.enc1.forward_into(x, &mut c.a1);
        act(&c.a1, &mut c.u1);
        self.enc2.forward_into(&c.u1, &mut c.a2);
        act(&c.a2, &mut c.u2);
        self.dec1.forward_into(&c.u2, &mut c.a3);
        act(&c.a3, &mut c.u3);
        self.dec2.forward_into(&c.u3, &mut c.out);
        for ((r, xv), o) in c.residual.iter_mut().zip(x).zip(&c.out) {
            *r = xv - o;
        }
    }
}

fn act(a: &[f64], u: &mut [f64]) {
    for (u, a) in u.iter_mut().zip(a) {
        *u = leaky_relu(*a);
    }
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![("node_base", &self.node_base)];
        out.extend(self.heads.iter().map(|h| ("attention.head", h.data.as_slice())));
        out.push(("attention.edge_proj", &self.edge_proj.data));
        for (name, d) in [
            ("encoder.1", &self.enc1),
            ("encoder.2", &self.enc2),
            ("decoder.1", &self.dec1),
            ("decoder.2", &self.dec2),
        ] {
            out.push((name, &d.weight.data));
            out.push((name, &d.bias));
        }
        out.push(("relations", &self.relations.vectors.data));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![("node_base", &mut self.node_base)];
        out.extend(self.heads.iter_mut().map(|h| ("attention.head", h.data.as_mut_slice())));
        out.push(("attention.edge_proj", &mut self.edge_proj.data));
        for (name, d) in [
            ("encoder.1", &mut self.enc1),
            ("encoder.2", &mut self.enc2),
            ("decoder.1", &mut self.dec1),
            ("decoder.2", &mut self.dec2),
        ] {
            out.push((name, &mut d.weight.data));
            out.push((name, &mut d.bias));
        }
        out.push(("relations", &mut self.relations.vectors.data));
        out
    }
}

struct AeCache {
    a1: Vec<f64>,
    u1: Vec<f64>,
    a2: Vec<f64>,
    u2: Vec<f64>,
    a3: Vec<f64>,
    u3: Vec<f64>,
    out: Vec<f64>,
    residual: Vec<f64>,
}

impl AeCache {
    fn new(d: &ModelDims) -> Self {
        AeCache {
            a1: vec![0.0; d.hidden_dim],
            u1: vec![0.0; d.hidden_dim],
            a2: vec![0.0; d.latent_dim],
            u2: vec![0.0; d.latent_dim],
            a3: vec![0.0; d.hidden_dim],
            u3: vec![0.0; d.hidden_dim],
            out: vec![0.0; d.node_dim],
            residual: vec![0.0; d.node_dim],
        }
    }
}

/// Graph data the model consumes: edge endpoints and the per-relation
/// coefficients that multiply each relation vector in the edge feature.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeInputs {
    pub node_count: usize,
    pub ends: Vec<(u32, u32)>,
    pub coeffs: Vec<[f64; R]>,
}

impl EdgeInputs {
    pub fn from_graph(graph: &FusedGraph, weighting: EdgeWeighting) -> Self {
        let mut ends = Vec::with_capacity(graph.edges().len());
        let mut coeffs = Vec::with_capacity(graph.edges().len());
        for e in graph.edges() {
            ends.push((e.a, e.b));
            let mut c = [0.0; R];
            for r in e.relations.iter() {
                c[r.index()] = match weighting {
                    EdgeWeighting::CoOccurrence => e.weights[r.index()],
                    EdgeWeighting::Unit => 1.0,
                };
            }
            coeffs.push(c);
        }
        EdgeInputs { node_count: graph.node_count(), ends, coeffs }
    }

    pub fn edge_count(&self) -> usize {
        self.ends.len()
    }
}

/// Intermediate values of one full-graph forward pass.
pub struct Forward {
    /// `base · W_k` per head.
    q: Vec<Vec<f64>>,
    /// `f_e · W`, `edge_count × attention_dim`.
    z: Vec<f64>,
    /// Per-edge, per-head pre-activations.
    pre: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `Σ_j α_ij` per node; the aggregated feature is `sum · base`.
    pub alpha_sum: Vec<f64>,
    caches: Vec<AeCache>,
    /// Reconstruction error per node.
    pub losses: Vec<f64>,
}

impl ModelParams {
    pub fn forward(&self, inputs: &EdgeInputs) -> Forward {
        let d = &self.dims;
        let da = d.attention_dim;
        let q: Vec<Vec<f64>> = self.heads.iter().map(|w| w.vec_mul(&self.node_base)).collect();
        let proj: Vec<Vec<f64>> = (0..R)
            .map(|r| {
                let mut out = vec![0.0; da];
                for (c, &ev) in self.relations.vectors.row(r).iter().enumerate() {
                    let row = self.edge_proj.row(r * d.relation_dim + c);
                    for (o, w) in out.iter_mut().zip(row) {
                        *o += ev * w;
                    }
                }
                out
            })
            .collect();

        let m = inputs.edge_count();
        let mut z = vec![0.0; m * da];
        let mut pre = vec![0.0; m * d.heads];
        let mut alpha = vec![0.0; m];
        let mut alpha_sum = vec![0.0; inputs.node_count];
        for (e, coeff) in inputs.coeffs.iter().enumerate() {
            let ze = &mut z[e * da..(e + 1) * da];
            for (r, &c) in coeff.iter().enumerate() {
                if c != 0.0 {
                    for (o, p) in ze.iter_mut().zip(&proj[r]) {
                        *o += c * p;
                    }
                }
            }
            let mut a = 0.0;
            for (k, qk) in q.iter().enumerate() {
                let p = math::dot(qk, ze);
                pre[e * d.heads + k] = p;
                a += leaky_relu(p);
            }
            alpha[e] = a / d.heads as f64;
            let (i, j) = inputs.ends[e];
            alpha_sum[i as usize] += alpha[e];
            alpha_sum[j as usize] += alpha[e];
        }

        let mut caches = Vec::with_capacity(inputs.node_count);
        let mut losses = Vec::with_capacity(inputs.node_count);
        let mut x = vec![0.0; d.node_dim];
        for &s in &alpha_sum {
            for (xv, b) in x.iter_mut().zip(&self.node_base) {
                *xv = s * b;
            }
            let mut c = AeCache::new(d);
            self.ae_forward(&x, &mut c);
            losses.push(math::l2_norm(&c.residual));
            caches.push(c);
        }
        Forward { q, z, pre, alpha, alpha_sum, caches, losses }
    }

    /// Aggregated features `h'_i = Σ_j α_ij h_j` with `h_j = node_base`.
    pub fn aggregate(&self, inputs: &EdgeInputs) -> Vec<Vec<f64>> {
        self.forward(inputs)
            .alpha_sum
            .iter()
            .map(|&s| self.node_base.iter().map(|b| s * b).collect())
            .collect()
    }

    /// Reconstruction error per node.
    pub fn node_scores(&self, inputs: &EdgeInputs) -> Vec<f64> {
        self.forward(inputs).losses
    }

    /// Back-propagates per-node loss gradients `dloss[i] = ∂L/∂l_i` and
    /// accumulates parameter gradients into `grad`.
    pub fn backward(&self, inputs: &EdgeInputs, fwd: &Forward, dloss: &[f64], grad: &mut ModelParams) {
        let d = &self.dims;
        let da = d.attention_dim;
        let heads = d.heads as f64;
        let mut dalpha_sum = vec![0.0; inputs.node_count];

        let mut da1 = vec![0.0; d.hidden_dim];
        let mut du1 = vec![0.0; d.hidden_dim];
        let mut da2 = vec![0.0; d.latent_dim];
        let mut du2 = vec![0.0; d.latent_dim];
        let mut da3 = vec![0.0; d.hidden_dim];
        let mut du3 = vec![0.0; d.hidden_dim];
        let mut dout = vec![0.0; d.node_dim];
        let mut dx = vec![0.0; d.node_dim];
        let mut x = vec![0.0; d.node_dim];

        for (i, c) in fwd.caches.iter().enumerate() {
            let l = fwd.losses[i];
            if dloss[i] == 0.0 || l == 0.0 {
                continue;
            }
            let s = fwd.alpha_sum[i];
            for (xv, b) in x.iter_mut().zip(&self.node_base) {
                *xv = s * b;
            }
            // l = |x - out|
            let scale = dloss[i] / l;
            for ((dxv, doutv), r) in dx.iter_mut().zip(dout.iter_mut()).zip(&c.residual) {
                *dxv = scale * r;
                *doutv = -scale * r;
            }
            dense_backward(&self.dec2, &c.u3, &dout, &mut grad.dec2, &mut du3);
            act_backward(&c.a3, &du3, &mut da3);
            dense_backward(&self.dec1, &c.u2, &da3, &mut grad.dec1, &mut du2);
            act_backward(&c.a2, &du2, &mut da2);
            dense_backward(&self.enc2, &c.u1, &da2, &mut grad.enc2, &mut du1);
            act_backward(&c.a1, &du1, &mut da1);
            let mut dxin = vec![0.0; d.node_dim];
            dense_backward(&self.enc1, &x, &da1, &mut grad.enc1, &mut dxin);
            for (a, b) in dx.iter_mut().zip(&dxin) {
                *a += b;
            }
            // x = s · base
            dalpha_sum[i] = math::dot(&dx, &self.node_base);
            for (g, v) in grad.node_base.iter_mut().zip(&dx) {
                *g += s * v;
            }
        }

        let mut dq = vec![vec![0.0; da]; d.heads];
        let mut dproj = vec![vec![0.0; da]; R];
        let mut dz = vec![0.0; da];
        for (e, &(i, j)) in inputs.ends.iter().enumerate() {
            let dalpha = dalpha_sum[i as usize] + dalpha_sum[j as usize];
            if dalpha == 0.0 {
                continue;
            }
            let ze = &fwd.z[e * da..(e + 1) * da];
            dz.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..d.heads {
                let dp = dalpha / heads * leaky_relu_grad(fwd.pre[e * d.heads + k]);
                for ((dqv, zv), (dzv, qv)) in dq[k].iter_mut().zip(ze).zip(dz.iter_mut().zip(&fwd.q[k])) {
                    *dqv += dp * zv;
                    *dzv += dp * qv;
                }
            }
            for (r, &c) in inputs.coeffs[e].iter().enumerate() {
                if c != 0.0 {
                    for (o, v) in dproj[r].iter_mut().zip(&dz) {
                        *o += c * v;
                    }
                }
            }
        }
        for (k, w) in self.heads.iter().enumerate() {
            grad.heads[k].add_outer(&self.node_base, &dq[k], 1.0);
            let mut back = vec![0.0; d.node_dim];
            w.mul_vec_into(&dq[k], &mut back);
            for (g, b) in grad.node_base.iter_mut().zip(&back) {
                *g += b;
            }
        }
        let rd = d.relation_dim;
        for r in 0..R {
            let er = self.relations.vectors.row(r);
            for c in 0..rd {
                let row = r * rd + c;
                let wrow = self.edge_proj.row(row);
                grad.relations.vectors.row_mut(r)[c] += math::dot(wrow, &dproj[r]);
                let ev = er[c];
                for (g, v) in grad.edge_proj.row_mut(row).iter_mut().zip(&dproj[r]) {
                    *g += ev * v;
                }
            }
        }
    }
}

fn dense_backward(layer: &Dense, input: &[f64], dy: &[f64], grad: &mut Dense, dinput: &mut [f64]) {
    grad.weight.add_outer(input, dy, 1.0);
    for (g, v) in grad.bias.iter_mut().zip(dy) {
        *g += v;
    }
    layer.weight.mul_vec_into(dy, dinput);
}

fn act_backward(a: &[f64], du: &[f64], da: &mut [f64]) {
    for ((o, av), dv) in da.iter_mut().zip(a).zip(du) {
        *o = dv * leaky_relu_grad(*av);
    }
}

/// Node membership in the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Labeled node in the training split.
    Train(Label),
    /// Unlabeled node; enters the reconstruction (MSE) term.
    Unlabeled,
    /// Labeled node held out for validation; no loss contribution.
    Held,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub relation: f64,
    pub labeled: f64,
    pub unlabeled: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(relation: f64, labeled: f64, unlabeled: f64) -> Self {
        LossBreakdown { relation, labeled, unlabeled, total: relation + labeled + unlabeled }
    }
}

/// Maps a reconstruction loss into (0, 1): `1 - exp(-l)`.
pub fn fraud_probability(loss: f64) -> f64 {
    1.0 - math::exp(-loss)
}

/// Labeled BCE on `1 - exp(-l)` plus unlabeled mean of `l²`, each averaged
/// over its node set. Returns the breakdown and `∂(labeled + unlabeled)/∂l_i`.
pub fn total_loss(losses: &[f64], roles: &[NodeRole], relation_loss: f64) -> (LossBreakdown, Vec<f64>) {
    let n_lab = roles.iter().filter(|r| matches!(r, NodeRole::Train(l) if l.is_known())).count();
    let n_unl = roles.iter().filter(|r| matches!(r, NodeRole::Unlabeled)).count();
    let mut labeled = 0.0;
    let mut unlabeled = 0.0;
    let mut grad = vec![0.0; losses.len()];
    for (i, (&l, role)) in losses.iter().zip(roles).enumerate() {
        match role {
            NodeRole::Train(label) if label.is_known() => {
                let y = if *label == Label::Fraud { 1.0 } else { 0.0 };
                let raw = fraud_probability(l);
                let p = raw.clamp(BCE_EPS, 1.0 - BCE_EPS);
                labeled += -(y * math::ln(p) + (1.0 - y) * math::ln(1.0 - p));
                if p == raw {
                    let dp = -y / p + (1.0 - y) / (1.0 - p);
                    grad[i] = dp * math::exp(-l) / n_lab as f64;
                }
            }
            NodeRole::Unlabeled => {
                unlabeled += l * l;
                grad[i] = 2.0 * l / n_unl as f64;
            }
            _ => {}
        }
    }
    if n_lab > 0 {
        labeled /= n_lab as f64;
    }
    if n_unl > 0 {
        unlabeled /= n_unl as f64;
    }
    (LossBreakdown::new(relation_loss, labeled, unlabeled), grad)
}
