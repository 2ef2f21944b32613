//! First-order optimizers over [`Param`]s visited in a stable order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Param, ParamKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    /// `adam` or `sgd`.
    pub kind: String,
    pub lr: f64,
    /// Decoupled from the loss; applied to `ParamKind::Weight` only.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warmup length in steps (0 disables).
    pub warmup_steps: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            kind: "adam".into(),
            lr: 2e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("optim.lr must be positive, got {}", self.lr)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("optim.weight_decay must be >= 0".into()));
        }
        if !matches!(self.kind.as_str(), "adam" | "sgd") {
            return Err(Error::UnknownVariant {
                kind: "optimizer",
                name: self.kind.clone(),
                available: "adam, sgd".into(),
            });
        }
        Ok(())
    }
}

/// Per-parameter moment buffers, addressed by visit order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Optimizer {
    cfg: OptimConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: OptimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            ..Default::default()
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        let w = self.cfg.warmup_steps;
        if w == 0 || self.step >= w {
            self.cfg.lr
        } else {
            self.cfg.lr * (self.step + 1) as f64 / w as f64
        }
    }

    /// Begins an update; call [`Optimizer::update`] for every parameter in
    /// visit order, then nothing else.
    pub fn begin_step(&mut self) -> StepCtx<'_> {
        let lr = self.current_lr();
        self.step += 1;
        StepCtx {
            opt: self,
            lr,
            slot: 0,
        }
    }
}

pub struct StepCtx<'a> {
    opt: &'a mut Optimizer,
    lr: f64,
    slot: usize,
}

impl StepCtx<'_> {
    pub fn update(&mut self, p: &mut Param) {
        if !p.trainable() {
            return;
        }
        let cfg = &self.opt.cfg;
        let decay = if p.kind == ParamKind::Weight {
            cfg.weight_decay
        } else {
            0.0
        };
        let lr = self.lr;
        match cfg.kind.as_str() {
            "sgd" => {
                for (w, g) in p.value.iter_mut().zip(&p.grad) {
                    *w -= lr * (g + decay * *w);
                }
            }
            _ => {
                let slot = self.slot;
                if self.opt.m.len() <= slot {
                    self.opt.m.push(vec![0.0; p.len()]);
                    self.opt.v.push(vec![0.0; p.len()]);
                }
                let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
                let t = self.opt.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                let m = &mut self.opt.m[slot];
                let v = &mut self.opt.v[slot];
                for i in 0..p.value.len() {
                    let g = p.grad[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    p.value[i] -= lr * (mhat / (vhat.sqrt() + eps) + decay * p.value[i]);
                }
            }
        }
        self.slot += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sgd(lr: f64, wd: f64) -> Optimizer {
        Optimizer::new(OptimConfig {
            kind: "sgd".into(),
            lr,
            weight_decay: wd,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn sgd_step_and_decay_only_on_weights() {
        let mut opt = sgd(0.1, 0.5);
        let mut w = Param::new("w", ParamKind::Weight, vec![1.0]);
        let mut b = Param::new("b", ParamKind::NoDecay, vec![1.0]);
        let mut r = Param::new("r", ParamKind::Buffer, vec![1.0]);
        w.grad[0] = 2.0;
        b.grad[0] = 2.0;
        r.grad[0] = 2.0;
        let mut ctx = opt.begin_step();
        ctx.update(&mut w);
        ctx.update(&mut b);
        ctx.update(&mut r);
        assert!((w.value[0] - (1.0 - 0.1 * 2.5)).abs() < 1e-15);
        assert!((b.value[0] - 0.8).abs() < 1e-15);
        assert_eq!(r.value[0], 1.0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // With bias correction the first step is lr * g / (|g| + eps).
        let mut opt = Optimizer::new(OptimConfig {
            weight_decay: 0.0,
            ..Default::default()
        })
        .unwrap();
        let mut p = Param::new("x", ParamKind::Weight, vec![0.0, 0.0]);
        p.grad = vec![3.0, -0.5];
        opt.begin_step().update(&mut p);
        assert!((p.value[0] + 2e-4 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((p.value[1] - 2e-4 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn warmup_and_validation() {
        let mut opt = Optimizer::new(OptimConfig {
            warmup_steps: 4,
            ..Default::default()
        })
        .unwrap();
        assert!((opt.current_lr() - 0.5e-4).abs() < 1e-18);
        for _ in 0..4 {
            opt.begin_step();
        }
        assert_eq!(opt.current_lr(), 2e-4);
        assert!(Optimizer::new(OptimConfig {
            lr: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(Optimizer::new(OptimConfig {
            kind: "lbfgs".into(),
            ..Default::default()
        })
        .is_err());
    }
}
