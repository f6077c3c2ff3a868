//! Shared one-hidden-layer relu trunk with one softmax head per task.
//!
//! `phi(x) = relu(W1 x + b1)` is shared; head `k` is a `C x H` matrix and
//! `p(c | x, k) = softmax(Theta_k phi(x))_c`. Training minimises the mean
//! cross-entropy of the current batch under the newest head plus `lambda`
//! times the mean cross-entropy of each replay buffer under its own head.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cl::ReplayBuffer;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::stats::discrete_item_score;
use crate::types::{LabeledExample, MiniBatch};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: [rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let cols = self.cols();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * cols..(r + 1) * cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Every trainable parameter. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub heads: Vec<Matrix>,
}

impl MultiHeadParams {
    fn zeros_like(&self) -> Self {
        Self {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            heads: self.heads.iter().map(|h| Matrix::zeros(h.rows(), h.cols())).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn classes(&self) -> usize {
        self.heads.first().map_or(0, Matrix::rows)
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .data
            .iter()
            .chain(&self.b1)
            .chain(self.heads.iter().flat_map(|h| &h.data))
            .all(|v| v.is_finite())
    }

    fn check_head(&self, head: usize) -> Result<()> {
        if head >= self.heads.len() {
            return Err(Error::UnknownHead {
                head,
                heads: self.heads.len(),
            });
        }
        Ok(())
    }

    fn features(&self, x: &[f64], pre: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        self.w1.mul_vec(x, pre);
        for (p, b) in pre.iter_mut().zip(&self.b1) {
            *p += b;
        }
        Ok(())
    }

    /// Class probabilities of `x` under head `head` (0-based).
    pub fn forward(&self, x: &[f64], head: usize) -> Result<Vec<f64>> {
        self.check_head(head)?;
        let mut pre = vec![0.0; self.hidden()];
        self.features(x, &mut pre)?;
        let phi: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let mut logits = vec![0.0; self.classes()];
        self.heads[head].mul_vec(&phi, &mut logits);
        Ok(softmax(&logits))
    }

    /// `-ln p(label | x, head)` via log-sum-exp.
    pub fn nll(&self, example: &LabeledExample, head: usize) -> Result<f64> {
        self.check_head(head)?;
        self.check_label(example.label)?;
        let mut pre = vec![0.0; self.hidden()];
        self.features(&example.x, &mut pre)?;
        let phi: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let mut logits = vec![0.0; self.classes()];
        self.heads[head].mul_vec(&phi, &mut logits);
        Ok(log_sum_exp(&logits) - logits[example.label])
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.classes() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.classes(),
            });
        }
        Ok(())
    }

    /// Composite loss of one batch on `head` plus `lambda` times the replays.
    pub fn loss(&self, items: &[LabeledExample], head: usize, replays: &[ReplayBuffer], lambda: f64) -> Result<f64> {
        let mut total = mean_nll(self, items, head)?;
        if lambda != 0.0 {
            for r in replays.iter().filter(|r| !r.items.is_empty()) {
                total += lambda * mean_nll(self, &r.items, r.head)?;
            }
        }
        Ok(total)
    }

    /// Loss and its gradient with respect to every parameter block.
    pub fn loss_and_gradient(
        &self,
        items: &[LabeledExample],
        head: usize,
        replays: &[ReplayBuffer],
        lambda: f64,
    ) -> Result<(f64, MultiHeadParams)> {
        let mut grad = self.zeros_like();
        let mut scratch = Scratch::new(self.hidden(), self.classes());
        let mut loss = accumulate(self, items, head, 1.0, &mut grad, &mut scratch)?;
        if lambda != 0.0 {
            for r in replays.iter().filter(|r| !r.items.is_empty()) {
                loss += accumulate(self, &r.items, r.head, lambda, &mut grad, &mut scratch)?;
            }
        }
        Ok((loss, grad))
    }

    fn axpy(&mut self, scale: f64, g: &MultiHeadParams) {
        for (p, d) in self.w1.data.iter_mut().zip(&g.w1.data) {
            *p += scale * d;
        }
        for (p, d) in self.b1.iter_mut().zip(&g.b1) {
            *p += scale * d;
        }
        for (h, gh) in self.heads.iter_mut().zip(&g.heads) {
            for (p, d) in h.data.iter_mut().zip(&gh.data) {
                *p += scale * d;
            }
        }
    }
}

fn mean_nll(params: &MultiHeadParams, items: &[LabeledExample], head: usize) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptySegment);
    }
    let mut s = 0.0;
    for e in items {
        s += params.nll(e, head)?;
    }
    Ok(s / items.len() as f64)
}

struct Scratch {
    pre: Vec<f64>,
    phi: Vec<f64>,
    logits: Vec<f64>,
    dphi: Vec<f64>,
}

impl Scratch {
    fn new(hidden: usize, classes: usize) -> Self {
        Self {
            pre: vec![0.0; hidden],
            phi: vec![0.0; hidden],
            logits: vec![0.0; classes],
            dphi: vec![0.0; hidden],
        }
    }
}

/// Adds `weight * grad(mean NLL over items)` into `grad`; returns the weighted loss.
fn accumulate(
    params: &MultiHeadParams,
    items: &[LabeledExample],
    head: usize,
    weight: f64,
    grad: &mut MultiHeadParams,
    s: &mut Scratch,
) -> Result<f64> {
    params.check_head(head)?;
    if items.is_empty() {
        return Err(Error::EmptySegment);
    }
    let scale = weight / items.len() as f64;
    let theta = &params.heads[head];
    let (hidden, classes, dim) = (params.hidden(), params.classes(), params.input_dim());
    let mut loss = 0.0;
    for e in items {
        params.check_label(e.label)?;
        params.features(&e.x, &mut s.pre)?;
        for (f, p) in s.phi.iter_mut().zip(&s.pre) {
            *f = p.max(0.0);
        }
        theta.mul_vec(&s.phi, &mut s.logits);
        let lse = log_sum_exp(&s.logits);
        loss += lse - s.logits[e.label];

        // dL/dlogits = p - onehot(label)
        s.dphi.iter_mut().for_each(|v| *v = 0.0);
        let gh = &mut grad.heads[head];
        for c in 0..classes {
            let mut d = (s.logits[c] - lse).exp();
            if c == e.label {
                d -= 1.0;
            }
            d *= scale;
            let row = c * hidden;
            for m in 0..hidden {
                gh.data[row + m] += d * s.phi[m];
                s.dphi[m] += d * theta.data[row + m];
            }
        }
        for m in 0..hidden {
            if s.pre[m] <= 0.0 {
                continue;
            }
            let d = s.dphi[m];
            grad.b1[m] += d;
            let row = m * dim;
            for (j, xj) in e.x.iter().enumerate() {
                grad.w1.data[row + j] += d * xj;
            }
        }
    }
    Ok(loss * scale)
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Multi-head classifier trained by constant-rate gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadClassifier {
    pub params: MultiHeadParams,
    pub rho: f64,
    pub lambda: f64,
}

impl MultiHeadClassifier {
    /// Random trunk (He-scaled normal weights, zero bias) and one zero head.
    pub fn new(input_dim: usize, hidden: usize, classes: usize, rho: f64, lambda: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "classifier needs d >= 1, H >= 1, C >= 2 (got {input_dim}, {hidden}, {classes})"
            )));
        }
        let mut rng = seeded_rng(seed);
        let scale = (2.0 / input_dim as f64).sqrt();
        let mut w1 = Matrix::zeros(hidden, input_dim);
        for w in w1.data.iter_mut() {
            *w = scale * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(Self {
            params: MultiHeadParams {
                w1,
                b1: vec![0.0; hidden],
                heads: vec![Matrix::zeros(classes, hidden)],
            },
            rho,
            lambda,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.params.heads.len()
    }

    /// Index of the newest head.
    pub fn current_head(&self) -> usize {
        self.num_heads() - 1
    }

    /// Appends a zero-initialised head and returns its index.
    pub fn spawn_head(&mut self) -> usize {
        let (c, h) = (self.params.classes(), self.params.hidden());
        self.params.heads.push(Matrix::zeros(c, h));
        self.current_head()
    }

    /// Softmax class probabilities under head `head` (0-based).
    pub fn forward(&self, x: &[f64], head: usize) -> Result<Vec<f64>> {
        self.params.forward(x, head)
    }

    /// One gradient step of the composite replay loss for the batch under `head`.
    pub fn update(&mut self, batch: &MiniBatch<LabeledExample>, head: usize, replays: &[ReplayBuffer]) -> Result<()> {
        let (_, grad) = self
            .params
            .loss_and_gradient(&batch.items, head, replays, self.lambda)?;
        self.params.axpy(-self.rho, &grad);
        if !self.params.is_finite() {
            return Err(Error::NonFinite("classifier parameters"));
        }
        Ok(())
    }

    /// Per-item `ln(-ln p(c_i | x_i, head) + eps)` under `params`.
    pub fn item_scores_with(
        params: &MultiHeadParams,
        batch: &MiniBatch<LabeledExample>,
        head: usize,
        eps: f64,
    ) -> Result<Vec<f64>> {
        batch
            .items
            .iter()
            .map(|e| {
                let nll = params.nll(e, head)?.max(0.0);
                Ok((nll + eps).ln())
            })
            .collect()
    }

    /// Batch-average transformed score under the live parameters.
    pub fn score(&self, batch: &MiniBatch<LabeledExample>, head: usize, eps: f64) -> Result<f64> {
        let v = Self::item_scores_with(&self.params, batch, head, eps)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Same score, routed through explicit probabilities.
    pub fn score_via_probabilities(&self, batch: &MiniBatch<LabeledExample>, head: usize, eps: f64) -> Result<f64> {
        let mut s = 0.0;
        for e in &batch.items {
            self.params.check_label(e.label)?;
            let p = self.forward(&e.x, head)?[e.label];
            s += discrete_item_score(p, eps)?;
        }
        Ok(s / batch.len() as f64)
    }
}
