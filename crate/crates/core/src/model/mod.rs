//! Full detector: RGB backbone, optional frequency branch fused at the early
//! tap, D-dimensional embedding head and a 2-way affine classifier.

pub mod afimb;
pub mod backbone;
pub mod fusion;

pub use afimb::{Afimb, AfimbConfig};
pub use backbone::{Backbone, BackboneBuilder, BackboneConfig, BackboneRegistry, StagedBackbone};
pub use fusion::{Fusion, FusionConfig, FusionInputs, FusionRegistry};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{round_to_f32, Layer, Linear, MaxPool2d, Mode, ParamVisitor, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    /// Enables the frequency branch (AFIMB + fusion).
    pub use_frequency: bool,
    pub afimb: AfimbConfig,
    pub fusion: FusionConfig,
    pub embedding_dim: usize,
    pub num_classes: usize,
    /// Rounds stored activations through f32. Off keeps every path in f64.
    pub mixed_precision: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            use_frequency: true,
            afimb: AfimbConfig::default(),
            fusion: FusionConfig::default(),
            embedding_dim: 1000,
            num_classes: 2,
            mixed_precision: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim < 2 {
            return Err(Error::Config(format!(
                "embedding_dim must be >= 2, got {}",
                self.embedding_dim
            )));
        }
        if self.num_classes != 2 {
            return Err(Error::Config(format!(
                "num_classes must be 2, got {}",
                self.num_classes
            )));
        }
        if self.use_frequency {
            self.afimb.validate()?;
        }
        Ok(())
    }
}

/// Per-sample rows, `n × 2` logits and `n × D` embeddings.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub logits: Vec<f64>,
    pub embeddings: Vec<f64>,
}

struct FrequencyBranch {
    afimb: Afimb,
    fusion: Box<dyn Fusion>,
    /// Built on first use once the two spatial sizes are known.
    align: Option<(usize, MaxPool2d)>,
}

pub struct Model {
    cfg: ModelConfig,
    backbone: Box<dyn Backbone>,
    freq: Option<FrequencyBranch>,
    embed: Linear,
    classifier: Linear,
}

impl Model {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::with_registries(cfg, &BackboneRegistry::default(), &FusionRegistry::default(), rng)
    }

    pub fn with_registries(
        cfg: &ModelConfig,
        backbones: &BackboneRegistry,
        fusions: &FusionRegistry,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let builder = backbones.get(&cfg.backbone.name)?;
        let tap = builder.tap_channels(&cfg.backbone)?;
        let (freq, late_in) = if cfg.use_frequency {
            let afimb = Afimb::new("afimb", &cfg.afimb, rng)?;
            let fusion = fusions.build(
                &cfg.fusion,
                FusionInputs {
                    rgb_channels: tap,
                    freq_channels: cfg.afimb.out_channels,
                    target_channels: tap,
                },
                rng,
            )?;
            let late_in = fusion.out_channels();
            let branch = FrequencyBranch {
                afimb,
                fusion,
                align: None,
            };
            (Some(branch), late_in)
        } else {
            (None, tap)
        };
        let backbone = builder.build(&cfg.backbone, late_in, rng)?;
        let embed = Linear::new("head.embed", backbone.feature_dim(), cfg.embedding_dim, rng);
        let classifier = Linear::new("head.classifier", cfg.embedding_dim, cfg.num_classes, rng);
        Ok(Self {
            cfg: cfg.clone(),
            backbone,
            freq,
            embed,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn uses_frequency(&self) -> bool {
        self.freq.is_some()
    }

    pub fn afimb_mut(&mut self) -> Option<&mut Afimb> {
        self.freq.as_mut().map(|f| &mut f.afimb)
    }

    fn store(&self, mut t: Tensor) -> Tensor {
        if self.cfg.mixed_precision {
            round_to_f32(&mut t);
        }
        t
    }

    /// `rgb` is `[n, 3, H, W]`; `freq` is `[n, 192, H/8, W/8]` and required
    /// exactly when the frequency branch is enabled.
    pub fn forward(&mut self, rgb: &Tensor, freq: Option<&Tensor>, mode: Mode) -> Result<ModelOutput> {
        if rgb.channels() != 3 {
            return Err(shape_err("3 RGB channels", rgb.shape()));
        }
        let tap = self.backbone.forward_early(rgb, mode)?;
        let tap = self.store(tap);
        let fused = match (&mut self.freq, freq) {
            (None, None) => tap,
            (Some(branch), Some(x)) => {
                if x.batch() != rgb.batch() {
                    return Err(shape_err(rgb.shape(), x.shape()));
                }
                let mut f = branch.afimb.forward(x, mode)?;
                let (fh, fw) = f.spatial();
                let (th, tw) = tap.spatial();
                if (fh, fw) != (th, tw) {
                    let ratio = alignment_ratio((fh, fw), (th, tw))?;
                    if branch.align.as_ref().map(|a| a.0) != Some(ratio) {
                        branch.align = Some((ratio, MaxPool2d::new(ratio, ratio)?));
                    }
                    let (_, pool) = branch.align.as_mut().expect("alignment pool set above");
                    f = pool.forward(&f, mode)?;
                } else {
                    branch.align = None;
                }
                if self.cfg.mixed_precision {
                    round_to_f32(&mut f);
                }
                branch.fusion.forward(&tap, &f, mode)?
            }
            (Some(_), None) => {
                return Err(Error::Config(
                    "model has a frequency branch but no frequency input was given".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Config(
                    "frequency input given to an RGB-only model".into(),
                ))
            }
        };
        let feat = self.backbone.forward_late(&fused, mode)?;
        let n = feat.batch();
        let feat = Tensor::matrix(n, feat.sample_len(), feat.into_data())?;
        let emb = self.embed.forward(&feat, mode)?;
        let emb = self.store(emb);
        let logits = self.classifier.forward(&emb, mode)?;
        Ok(ModelOutput {
            logits: logits.into_data(),
            embeddings: emb.into_data(),
        })
    }

    /// Backpropagates the last training forward pass. `grad_logits` is `n × 2`;
    /// `grad_embeddings` (auxiliary loss, already weighted) is `n × D`.
    pub fn backward(&mut self, grad_logits: &[f64], grad_embeddings: Option<&[f64]>) -> Result<()> {
        let classes = self.cfg.num_classes;
        let n = grad_logits.len() / classes;
        let mut g = self
            .classifier
            .backward(&Tensor::matrix(n, classes, grad_logits.to_vec())?)?;
        if let Some(aux) = grad_embeddings {
            let aux = Tensor::matrix(n, self.cfg.embedding_dim, aux.to_vec())?;
            g.add_assign(&aux)?;
        }
        let g = self.embed.backward(&g)?;
        let d = self.backbone.feature_dim();
        let g = Tensor::from_vec([n, d, 1, 1], g.into_data())?;
        let g = self.backbone.backward_late(&g)?;
        let g_tap = match &mut self.freq {
            None => g,
            Some(branch) => {
                let (g_rgb, mut g_freq) = branch.fusion.backward(&g)?;
                if let Some((_, pool)) = &mut branch.align {
                    g_freq = pool.backward(&g_freq)?;
                }
                branch.afimb.backward(&g_freq)?;
                g_rgb
            }
        };
        self.backbone.backward_early(&g_tap)?;
        Ok(())
    }

    /// Visits parameters in a fixed order: backbone, frequency branch, head.
    pub fn visit_params(&mut self, f: &mut ParamVisitor) {
        self.backbone.visit_params(f);
        if let Some(branch) = &mut self.freq {
            branch.afimb.visit_params(f);
            branch.fusion.visit_params(f);
        }
        self.embed.visit_params(f);
        self.classifier.visit_params(f);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    pub fn num_parameters(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| {
            if p.trainable() {
                n += p.len()
            }
        });
        n
    }
}

/// Integer factor by which the frequency map must be max-pooled to match
/// the tap.
fn alignment_ratio(freq: (usize, usize), tap: (usize, usize)) -> Result<usize> {
    let ok = tap.0 > 0
        && tap.1 > 0
        && freq.0 % tap.0 == 0
        && freq.1 % tap.1 == 0
        && freq.0 / tap.0 == freq.1 / tap.1;
    if !ok {
        return Err(Error::Dimension(format!(
            "frequency features {}x{} cannot be pooled onto the {}x{} fusion tap",
            freq.0, freq.1, tap.0, tap.1
        )));
    }
    Ok(freq.0 / tap.0)
}
