//! RGB backbones. Each exposes an early feature tap where frequency
//! features are fused, and a late part ending in a pooled feature vector.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ConvBlock, ConvGeometry, GlobalAvgPool, Layer, Mode, ParamVisitor, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    /// Registry key.
    pub name: String,
    pub stem_channels: usize,
    /// Output width of each stride-2 stage; the tap follows the second.
    pub stage_channels: Vec<usize>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            name: "reference".into(),
            stem_channels: 32,
            stage_channels: vec![128, 256, 384, 512],
        }
    }
}

pub trait Backbone: Send {
    fn tap_channels(&self) -> usize;
    /// Total downsampling factor between the input image and the tap.
    fn tap_stride(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn forward_early(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;
    /// Consumes the (possibly fused) tap and returns `[n, feature_dim, 1, 1]`.
    fn forward_late(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;
    fn backward_late(&mut self, grad: &Tensor) -> Result<Tensor>;
    fn backward_early(&mut self, grad: &Tensor) -> Result<Tensor>;
    fn visit_params(&mut self, f: &mut ParamVisitor);
}

pub trait BackboneBuilder: Send + Sync {
    /// Width of the early tap, known before construction.
    fn tap_channels(&self, cfg: &BackboneConfig) -> Result<usize>;
    /// Builds the backbone with its late part accepting `late_in` channels.
    fn build(
        &self,
        cfg: &BackboneConfig,
        late_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn Backbone>>;
}

/// Stride-4 patchify stem, then stride-2 conv-block stages; the tap sits
/// after `early_stages` stages. Global average pooling at the end.
pub struct StagedBackbone {
    early: Vec<ConvBlock>,
    late: Vec<ConvBlock>,
    pool: GlobalAvgPool,
    tap_channels: usize,
    tap_stride: usize,
    feature_dim: usize,
}

const STEM_STRIDE: usize = 4;

impl StagedBackbone {
    fn new(
        cfg: &BackboneConfig,
        early_stages: usize,
        total_stages: usize,
        late_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if cfg.stage_channels.len() != total_stages {
            return Err(Error::Config(format!(
                "backbone `{}` needs {total_stages} stage widths, got {}",
                cfg.name,
                cfg.stage_channels.len()
            )));
        }
        if cfg.stem_channels == 0 || cfg.stage_channels.contains(&0) {
            return Err(Error::Config("backbone widths must be >= 1".into()));
        }
        let mut early = vec![ConvBlock::new(
            "backbone.stem",
            ConvGeometry::new(3, cfg.stem_channels, STEM_STRIDE)
                .stride(STEM_STRIDE)
                .padding(0),
            rng,
        )?];
        let mut c_in = cfg.stem_channels;
        for (i, &c) in cfg.stage_channels[..early_stages].iter().enumerate() {
            early.push(ConvBlock::new(
                &format!("backbone.stage{}", i + 1),
                ConvGeometry::new(c_in, c, 3).stride(2),
                rng,
            )?);
            c_in = c;
        }
        let tap_channels = c_in;
        let mut late = Vec::new();
        let mut c_in = late_in;
        for (i, &c) in cfg.stage_channels[early_stages..].iter().enumerate() {
            late.push(ConvBlock::new(
                &format!("backbone.stage{}", early_stages + i + 1),
                ConvGeometry::new(c_in, c, 3).stride(2),
                rng,
            )?);
            c_in = c;
        }
        Ok(Self {
            early,
            late,
            pool: GlobalAvgPool::default(),
            tap_channels,
            tap_stride: STEM_STRIDE << early_stages,
            feature_dim: c_in,
        })
    }
}

impl Backbone for StagedBackbone {
    fn tap_channels(&self) -> usize {
        self.tap_channels
    }

    fn tap_stride(&self) -> usize {
        self.tap_stride
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn forward_early(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (h, w) = x.spatial();
        if h % self.tap_stride != 0 || w % self.tap_stride != 0 {
            return Err(Error::Dimension(format!(
                "image {h}x{w} not divisible by backbone tap stride {}",
                self.tap_stride
            )));
        }
        let mut y = x.clone();
        for block in &mut self.early {
            y = block.forward(&y, mode)?;
        }
        Ok(y)
    }

    fn forward_late(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut y = x.clone();
        for block in &mut self.late {
            y = block.forward(&y, mode)?;
        }
        self.pool.forward(&y, mode)
    }

    fn backward_late(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = self.pool.backward(grad)?;
        for block in self.late.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        Ok(g)
    }

    fn backward_early(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for block in self.early.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        Ok(g)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        for b in self.early.iter_mut().chain(self.late.iter_mut()) {
            b.visit_params(f);
        }
    }
}

/// Four stages, tap after the second (overall tap stride 16).
struct ReferenceBuilder;

impl BackboneBuilder for ReferenceBuilder {
    fn tap_channels(&self, cfg: &BackboneConfig) -> Result<usize> {
        cfg.stage_channels
            .get(1)
            .copied()
            .ok_or_else(|| Error::Config("reference backbone needs 4 stage widths".into()))
    }

    fn build(
        &self,
        cfg: &BackboneConfig,
        late_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn Backbone>> {
        Ok(Box::new(StagedBackbone::new(cfg, 2, 4, late_in, rng)?))
    }
}

/// Three stages, tap after the second; one late stage.
struct CompactBuilder;

impl BackboneBuilder for CompactBuilder {
    fn tap_channels(&self, cfg: &BackboneConfig) -> Result<usize> {
        cfg.stage_channels
            .get(1)
            .copied()
            .ok_or_else(|| Error::Config("compact backbone needs 3 stage widths".into()))
    }

    fn build(
        &self,
        cfg: &BackboneConfig,
        late_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn Backbone>> {
        Ok(Box::new(StagedBackbone::new(cfg, 2, 3, late_in, rng)?))
    }
}

pub struct BackboneRegistry {
    entries: BTreeMap<String, Box<dyn BackboneBuilder>>,
}

impl Default for BackboneRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register("reference", Box::new(ReferenceBuilder));
        r.register("compact", Box::new(CompactBuilder));
        r
    }
}

impl BackboneRegistry {
    pub fn register(&mut self, name: &str, builder: Box<dyn BackboneBuilder>) {
        self.entries.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn BackboneBuilder> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownVariant {
                kind: "backbone",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }
}
