//! Center loss and batch-all triplet loss, used as comparison baselines.

use super::EmbeddingBatch;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub loss: f64,
    /// Gradient with respect to the embeddings, `B × D`.
    pub grad_embeddings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterLossOutput {
    pub inner: LossWithGrad,
    /// Gradient with respect to the two class centers, `2 × D`.
    pub grad_centers: Vec<f64>,
}

/// Mean squared Euclidean distance of each embedding to its class center.
/// `centers` holds the natural center followed by the manipulated one.
pub fn center_loss(batch: &EmbeddingBatch, centers: &[f64]) -> Result<CenterLossOutput> {
    let d = batch.dim();
    if centers.len() != 2 * d {
        return Err(shape_err(2 * d, centers.len()));
    }
    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; batch.len() * d];
    let mut grad_centers = vec![0.0; 2 * d];
    for (i, (f, &y)) in batch.rows().zip(batch.labels()).enumerate() {
        let c = &centers[y as usize * d..(y as usize + 1) * d];
        for k in 0..d {
            let diff = f[k] - c[k];
            loss += diff * diff;
            let g = 2.0 * diff / b;
            grad[i * d + k] = g;
            grad_centers[y as usize * d + k] -= g;
        }
    }
    Ok(CenterLossOutput {
        inner: LossWithGrad {
            loss: loss / b,
            grad_embeddings: grad,
        },
        grad_centers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutput {
    pub inner: LossWithGrad,
    pub valid_triplets: usize,
    pub active_triplets: usize,
    /// No valid (anchor, positive, negative) triple exists in the batch.
    pub degenerate: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Batch-all triplet loss on Euclidean distances, averaged over every valid
/// triplet `(a, p, n)` with `y_a = y_p`, `a ≠ p` and `y_n ≠ y_a`.
pub fn triplet_loss(batch: &EmbeddingBatch, margin: f64) -> TripletOutput {
    let d = batch.dim();
    let n = batch.len();
    let rows: Vec<&[f64]> = batch.rows().collect();
    let labels = batch.labels();
    let mut dmat = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dist(rows[i], rows[j]);
            dmat[i * n + j] = v;
            dmat[j * n + i] = v;
        }
    }
    let eps = 1e-12;
    let mut grad = vec![0.0; n * d];
    let mut total = 0.0;
    let mut valid = 0usize;
    let mut active = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for q in 0..n {
                if labels[q] == labels[a] {
                    continue;
                }
                valid += 1;
                let h = dmat[a * n + p] - dmat[a * n + q] + margin;
                if h > 0.0 {
                    total += h;
                    active.push((a, p, q));
                }
            }
        }
    }
    if valid == 0 {
        return TripletOutput {
            inner: LossWithGrad {
                loss: 0.0,
                grad_embeddings: grad,
            },
            valid_triplets: 0,
            active_triplets: 0,
            degenerate: true,
        };
    }
    let scale = 1.0 / valid as f64;
    for &(a, p, q) in &active {
        let dap = dmat[a * n + p].max(eps);
        let daq = dmat[a * n + q].max(eps);
        for k in 0..d {
            let uap = (rows[a][k] - rows[p][k]) / dap;
            let uaq = (rows[a][k] - rows[q][k]) / daq;
            grad[a * d + k] += scale * (uap - uaq);
            grad[p * d + k] -= scale * uap;
            grad[q * d + k] += scale * uaq;
        }
    }
    TripletOutput {
        inner: LossWithGrad {
            loss: total * scale,
            grad_embeddings: grad,
        },
        valid_triplets: valid,
        active_triplets: active.len(),
        degenerate: false,
    }
}
