//! Single-center loss.
//!
//! Natural embeddings are pulled toward one learnable center `C`; the mean
//! distance of manipulated embeddings is pushed beyond the natural mean by a
//! margin of `m·√D`:
//!
//! ```text
//! M_nat = mean_{i natural} ‖f_i − C‖₂
//! M_man = mean_{i manipulated} ‖f_i − C‖₂
//! L_sc  = M_nat + max(M_nat − M_man + m√D, 0)
//! ```

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EmbeddingBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SclConfig {
    /// Margin scale; the effective Euclidean margin is `m·√D`.
    pub m: f64,
    pub lambda: f64,
    /// Floor applied to distances in gradient denominators.
    pub eps_dist: f64,
}

impl Default for SclConfig {
    fn default() -> Self {
        Self {
            m: 0.3,
            lambda: 0.5,
            eps_dist: 1e-12,
        }
    }
}

impl SclConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 0.0) || !(self.lambda >= 0.0) || !(self.eps_dist > 0.0) {
            return Err(Error::Config(format!(
                "single-center loss needs m >= 0, lambda >= 0, eps_dist > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn margin(&self, dim: usize) -> f64 {
        self.m * (dim as f64).sqrt()
    }
}

/// The learnable anchor of natural-face embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterPoint {
    pub c: Vec<f64>,
}

impl CenterPoint {
    pub fn new(c: Vec<f64>) -> Self {
        Self { c }
    }

    /// Unit Gaussian scaled by `1/√D`.
    pub fn random(dim: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let c = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale
            })
            .collect();
        Self { c }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SclForwardResult {
    pub loss: f64,
    pub m_nat: f64,
    pub m_man: f64,
    /// `M_nat − M_man + m√D`.
    pub hinge_arg: f64,
    /// Natural count.
    pub s: usize,
    /// Manipulated count.
    pub t: usize,
    /// False when either class is missing from the batch.
    pub active: bool,
    /// `‖f_i − C‖₂` per sample.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SclGradients {
    /// `B × D`, row-major.
    pub embeddings: Vec<f64>,
    pub center: Vec<f64>,
}

fn check_center(batch: &EmbeddingBatch, center: &CenterPoint) -> Result<()> {
    if center.dim() != batch.dim() {
        return Err(crate::error::shape_err(batch.dim(), center.dim()));
    }
    if center.c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("center".into()));
    }
    Ok(())
}

pub fn scl_forward(
    batch: &EmbeddingBatch,
    center: &CenterPoint,
    cfg: &SclConfig,
) -> Result<SclForwardResult> {
    check_center(batch, center)?;
    let distances: Vec<f64> = batch
        .rows()
        .map(|f| {
            f.iter()
                .zip(&center.c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let (mut sum_nat, mut sum_man, mut s, mut t) = (0.0, 0.0, 0usize, 0usize);
    for (&d, &y) in distances.iter().zip(batch.labels()) {
        if y == 0 {
            sum_nat += d;
            s += 1;
        } else {
            sum_man += d;
            t += 1;
        }
    }
    let active = s > 0 && t > 0;
    let m_nat = if s > 0 { sum_nat / s as f64 } else { 0.0 };
    let m_man = if t > 0 { sum_man / t as f64 } else { 0.0 };
    let hinge_arg = m_nat - m_man + cfg.margin(batch.dim());
    let loss = if active {
        m_nat + hinge_arg.max(0.0)
    } else {
        0.0
    };
    Ok(SclForwardResult {
        loss,
        m_nat,
        m_man,
        hinge_arg,
        s,
        t,
        active,
        distances,
    })
}

/// Analytic gradients of `L_sc` with respect to every embedding and the center.
///
/// The hinge indicator is `hinge_arg > 0`; at the kink the subgradient 0 is
/// used. Distances in denominators are floored at `eps_dist`.
pub fn scl_backward(
    batch: &EmbeddingBatch,
    center: &CenterPoint,
    cfg: &SclConfig,
    fwd: &SclForwardResult,
) -> Result<SclGradients> {
    check_center(batch, center)?;
    let d = batch.dim();
    let s = batch.labels().iter().filter(|&&y| y == 0).count();
    let t = batch.len() - s;
    if fwd.distances.len() != batch.len() || fwd.s != s || fwd.t != t {
        return Err(Error::Config(
            "forward result does not belong to this batch".into(),
        ));
    }
    let mut embeddings = vec![0.0; batch.len() * d];
    let mut grad_center = vec![0.0; d];
    if !fwd.active {
        return Ok(SclGradients {
            embeddings,
            center: grad_center,
        });
    }
    let hinge_on = if fwd.hinge_arg > 0.0 { 1.0 } else { 0.0 };
    let nat_scale = (1.0 + hinge_on) / s as f64;
    let man_scale = -hinge_on / t as f64;
    for (i, (f, &y)) in batch.rows().zip(batch.labels()).enumerate() {
        let scale = if y == 0 { nat_scale } else { man_scale };
        if scale == 0.0 {
            continue;
        }
        let denom = fwd.distances[i].max(cfg.eps_dist);
        let out = &mut embeddings[i * d..(i + 1) * d];
        for k in 0..d {
            let g = scale * (f[k] - center.c[k]) / denom;
            out[k] = g;
            grad_center[k] -= g;
        }
    }
    Ok(SclGradients {
        embeddings,
        center: grad_center,
    })
}
