use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baselines::{center_loss, triplet_loss};
use super::scl::{scl_backward, scl_forward, CenterPoint, SclConfig, SclForwardResult};
use super::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::nn::{Param, ParamKind, ParamVisitor};

pub const LOSS_VARIANTS: [&str; 4] = [
    "softmax",
    "softmax+scl",
    "softmax+center",
    "softmax+triplet",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub variant: String,
    pub scl: SclConfig,
    pub center_weight: f64,
    pub triplet_weight: f64,
    pub triplet_margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: "softmax+scl".into(),
            scl: SclConfig::default(),
            center_weight: 0.01,
            triplet_weight: 0.01,
            triplet_margin: 0.3,
        }
    }
}

impl LossConfig {
    pub fn uses_scl(&self) -> bool {
        self.variant == "softmax+scl"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuxStats {
    Scl(SclForwardResult),
    Center,
    Triplet {
        valid: usize,
        active: usize,
        degenerate: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxOutput {
    /// Unweighted loss value.
    pub loss: f64,
    /// Weight applied to `loss` in the total objective.
    pub weight: f64,
    /// Weighted gradient with respect to the embeddings.
    pub grad_embeddings: Vec<f64>,
    pub stats: AuxStats,
}

/// An auxiliary loss on embeddings, added to softmax cross-entropy.
pub trait AuxLoss: Send {
    fn name(&self) -> &'static str;

    /// Evaluates the loss, returns weighted embedding gradients and
    /// accumulates weighted gradients into its own parameters.
    fn compute(&mut self, batch: &EmbeddingBatch) -> Result<AuxOutput>;

    fn visit_params(&mut self, f: &mut ParamVisitor);

    /// The anchor natural embeddings are compared against, when the loss has one.
    fn natural_center(&self) -> Option<Vec<f64>>;
}

pub type AuxLossFactory =
    fn(&LossConfig, usize, &mut ChaCha8Rng) -> Result<Option<Box<dyn AuxLoss>>>;

/// Loss variants keyed by name.
pub struct LossRegistry {
    entries: BTreeMap<String, AuxLossFactory>,
}

impl Default for LossRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register("softmax", |_, _, _| Ok(None));
        r.register("softmax+scl", |cfg, dim, rng| {
            cfg.scl.validate()?;
            Ok(Some(Box::new(SclLoss::new(cfg.scl, dim, rng))))
        });
        r.register("softmax+center", |cfg, dim, rng| {
            Ok(Some(Box::new(CenterLoss::new(cfg.center_weight, dim, rng))))
        });
        r.register("softmax+triplet", |cfg, _, _| {
            Ok(Some(Box::new(TripletLoss {
                weight: cfg.triplet_weight,
                margin: cfg.triplet_margin,
            })))
        });
        r
    }
}

impl LossRegistry {
    pub fn register(&mut self, name: &str, factory: AuxLossFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn build(
        &self,
        cfg: &LossConfig,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Box<dyn AuxLoss>>> {
        let factory = self
            .entries
            .get(&cfg.variant)
            .ok_or_else(|| Error::UnknownVariant {
                kind: "loss variant",
                name: cfg.variant.clone(),
                available: self.names().join(", "),
            })?;
        factory(cfg, dim, rng)
    }
}

pub struct SclLoss {
    cfg: SclConfig,
    pub center: Param,
}

impl SclLoss {
    pub fn new(cfg: SclConfig, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let c = CenterPoint::random(dim, rng);
        Self {
            cfg,
            center: Param::new("loss.center", ParamKind::NoDecay, c.c),
        }
    }
}

impl AuxLoss for SclLoss {
    fn name(&self) -> &'static str {
        "softmax+scl"
    }

    fn compute(&mut self, batch: &EmbeddingBatch) -> Result<AuxOutput> {
        let center = CenterPoint::new(self.center.value.clone());
        let fwd = scl_forward(batch, &center, &self.cfg)?;
        let grads = scl_backward(batch, &center, &self.cfg, &fwd)?;
        let w = self.cfg.lambda;
        for (g, d) in self.center.grad.iter_mut().zip(&grads.center) {
            *g += w * d;
        }
        Ok(AuxOutput {
            loss: fwd.loss,
            weight: w,
            grad_embeddings: grads.embeddings.iter().map(|g| w * g).collect(),
            stats: AuxStats::Scl(fwd),
        })
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        f(&mut self.center);
    }

    fn natural_center(&self) -> Option<Vec<f64>> {
        Some(self.center.value.clone())
    }
}

pub struct CenterLoss {
    weight: f64,
    dim: usize,
    pub centers: Param,
}

impl CenterLoss {
    pub fn new(weight: f64, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut v = CenterPoint::random(dim, rng).c;
        v.extend(CenterPoint::random(dim, rng).c);
        Self {
            weight,
            dim,
            centers: Param::new("loss.centers", ParamKind::NoDecay, v),
        }
    }
}

impl AuxLoss for CenterLoss {
    fn name(&self) -> &'static str {
        "softmax+center"
    }

    fn compute(&mut self, batch: &EmbeddingBatch) -> Result<AuxOutput> {
        let out = center_loss(batch, &self.centers.value)?;
        let w = self.weight;
        for (g, d) in self.centers.grad.iter_mut().zip(&out.grad_centers) {
            *g += w * d;
        }
        Ok(AuxOutput {
            loss: out.inner.loss,
            weight: w,
            grad_embeddings: out.inner.grad_embeddings.iter().map(|g| w * g).collect(),
            stats: AuxStats::Center,
        })
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        f(&mut self.centers);
    }

    fn natural_center(&self) -> Option<Vec<f64>> {
        Some(self.centers.value[..self.dim].to_vec())
    }
}

pub struct TripletLoss {
    weight: f64,
    margin: f64,
}

impl AuxLoss for TripletLoss {
    fn name(&self) -> &'static str {
        "softmax+triplet"
    }

    fn compute(&mut self, batch: &EmbeddingBatch) -> Result<AuxOutput> {
        let out = triplet_loss(batch, self.margin);
        let w = self.weight;
        Ok(AuxOutput {
            loss: out.inner.loss,
            weight: w,
            grad_embeddings: out.inner.grad_embeddings.iter().map(|g| w * g).collect(),
            stats: AuxStats::Triplet {
                valid: out.valid_triplets,
                active: out.active_triplets,
                degenerate: out.degenerate,
            },
        })
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor) {}

    fn natural_center(&self) -> Option<Vec<f64>> {
        None
    }
}
