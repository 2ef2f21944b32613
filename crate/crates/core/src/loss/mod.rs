//! Training objectives: softmax cross-entropy, the single-center loss and
//! the metric-learning baselines, plus a name-keyed registry of auxiliary
//! embedding losses.

mod baselines;
mod registry;
mod scl;

pub use baselines::{center_loss, triplet_loss, CenterLossOutput, LossWithGrad, TripletOutput};
pub use registry::{
    AuxLoss, AuxLossFactory, AuxOutput, AuxStats, LossConfig, LossRegistry, LOSS_VARIANTS,
};
pub use scl::{
    scl_backward, scl_forward, CenterPoint, SclConfig, SclForwardResult, SclGradients,
};

use crate::error::{shape_err, Error, Result};

/// Embedding vectors `f_i` (row-major `B × D`) with labels
/// `0 = natural`, `1 = manipulated`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    dim: usize,
    vectors: Vec<f64>,
    labels: Vec<u8>,
}

impl EmbeddingBatch {
    pub fn new(dim: usize, vectors: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if dim == 0 || labels.is_empty() {
            return Err(Error::Empty("embedding batch".into()));
        }
        if vectors.len() != dim * labels.len() {
            return Err(shape_err(dim * labels.len(), vectors.len()));
        }
        if let Some(y) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Config(format!("label {y} is not 0 or 1")));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embeddings".into()));
        }
        Ok(Self {
            dim,
            vectors,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.vectors.chunks_exact(self.dim)
    }
}

/// Mean softmax cross-entropy over `B × K` logits, with its gradient.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[u8], classes: usize) -> Result<LossWithGrad> {
    if logits.len() != labels.len() * classes {
        return Err(shape_err(labels.len() * classes, logits.len()));
    }
    let b = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, (row, &y)) in logits.chunks_exact(classes).zip(labels).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y as usize];
        for k in 0..classes {
            let p = (row[k] - log_z).exp();
            grad[i * classes + k] = (p - if k == y as usize { 1.0 } else { 0.0 }) / b;
        }
    }
    Ok(LossWithGrad {
        loss: loss / b,
        grad_embeddings: grad,
    })
}

/// Probability of class 1 for each row of `B × 2` logits.
pub fn manipulated_probability(logits: &[f64]) -> Vec<f64> {
    logits
        .chunks_exact(2)
        .map(|r| crate::nn::sigmoid(r[1] - r[0]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub total: f64,
    pub cross_entropy: f64,
    pub scl: SclForwardResult,
    pub grad_logits: Vec<f64>,
    /// `λ · ∂L_sc/∂f`.
    pub grad_embeddings: Vec<f64>,
    /// `λ · ∂L_sc/∂C`.
    pub grad_center: Vec<f64>,
}

/// `L_total = CE(logits, y) + λ·L_sc(f, C)` with gradients for every input.
pub fn total_loss(
    logits: &[f64],
    batch: &EmbeddingBatch,
    center: &CenterPoint,
    cfg: &SclConfig,
) -> Result<TotalLoss> {
    cfg.validate()?;
    let ce = softmax_cross_entropy(logits, batch.labels(), 2)?;
    let scl = scl_forward(batch, center, cfg)?;
    let grads = scl_backward(batch, center, cfg, &scl)?;
    let lambda = cfg.lambda;
    Ok(TotalLoss {
        total: ce.loss + lambda * scl.loss,
        cross_entropy: ce.loss,
        grad_logits: ce.grad_embeddings,
        grad_embeddings: grads.embeddings.iter().map(|g| lambda * g).collect(),
        grad_center: grads.center.iter().map(|g| lambda * g).collect(),
        scl,
    })
}
