//! Fusion of RGB-branch and frequency-branch feature maps at the early tap.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{ConvBlock, ConvGeometry, Layer, Mode, ParamVisitor, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Registry key: `concat`, `sum` or `conv`.
    pub kind: String,
    /// Kernel size of the `conv` variant (1 or 3).
    pub kernel: usize,
    /// Channel groups of the `conv` variant (1 or 2).
    pub groups: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            kind: "conv".into(),
            kernel: 1,
            groups: 1,
        }
    }
}

/// Channel counts seen by a fusion module.
#[derive(Debug, Clone, Copy)]
pub struct FusionInputs {
    pub rgb_channels: usize,
    pub freq_channels: usize,
    /// What the rest of the backbone expects at the tap.
    pub target_channels: usize,
}

pub trait Fusion: Send {
    fn out_channels(&self) -> usize;
    fn forward(&mut self, rgb: &Tensor, freq: &Tensor, mode: Mode) -> Result<Tensor>;
    /// Gradients with respect to `(rgb, freq)`.
    fn backward(&mut self, grad: &Tensor) -> Result<(Tensor, Tensor)>;
    fn visit_params(&mut self, f: &mut ParamVisitor);
}

fn check_spatial(rgb: &Tensor, freq: &Tensor) -> Result<()> {
    let (a, b) = (rgb.shape(), freq.shape());
    if a[0] != b[0] || a[2..] != b[2..] {
        return Err(shape_err(
            format!("batch/spatial of {a:?}"),
            format!("{b:?}"),
        ));
    }
    Ok(())
}

pub struct ConcatFusion {
    rgb_channels: usize,
    out: usize,
}

impl Fusion for ConcatFusion {
    fn out_channels(&self) -> usize {
        self.out
    }

    fn forward(&mut self, rgb: &Tensor, freq: &Tensor, _mode: Mode) -> Result<Tensor> {
        check_spatial(rgb, freq)?;
        Tensor::concat_channels(rgb, freq)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok(grad.split_channels(self.rgb_channels))
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor) {}
}

pub struct SumFusion {
    channels: usize,
}

impl Fusion for SumFusion {
    fn out_channels(&self) -> usize {
        self.channels
    }

    fn forward(&mut self, rgb: &Tensor, freq: &Tensor, _mode: Mode) -> Result<Tensor> {
        check_spatial(rgb, freq)?;
        if rgb.channels() != freq.channels() {
            return Err(shape_err(rgb.shape(), freq.shape()));
        }
        let mut out = rgb.clone();
        out.add_assign(freq)?;
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((grad.clone(), grad.clone()))
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor) {}
}

/// Concatenation followed by a k×k conv block projecting to the target width.
pub struct ConvFusion {
    rgb_channels: usize,
    block: ConvBlock,
    out: usize,
}

impl Fusion for ConvFusion {
    fn out_channels(&self) -> usize {
        self.out
    }

    fn forward(&mut self, rgb: &Tensor, freq: &Tensor, mode: Mode) -> Result<Tensor> {
        check_spatial(rgb, freq)?;
        let cat = Tensor::concat_channels(rgb, freq)?;
        self.block.forward(&cat, mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<(Tensor, Tensor)> {
        let g = self.block.backward(grad)?;
        Ok(g.split_channels(self.rgb_channels))
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        self.block.visit_params(f);
    }
}

pub type FusionFactory =
    fn(&FusionConfig, FusionInputs, &mut ChaCha8Rng) -> Result<Box<dyn Fusion>>;

pub struct FusionRegistry {
    entries: BTreeMap<String, FusionFactory>,
}

impl Default for FusionRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register("concat", |_, io, _| {
            Ok(Box::new(ConcatFusion {
                rgb_channels: io.rgb_channels,
                out: io.rgb_channels + io.freq_channels,
            }))
        });
        r.register("sum", |_, io, _| {
            if io.rgb_channels != io.freq_channels {
                return Err(Error::Config(format!(
                    "sum fusion needs equal widths, got rgb {} vs freq {}",
                    io.rgb_channels, io.freq_channels
                )));
            }
            Ok(Box::new(SumFusion {
                channels: io.rgb_channels,
            }))
        });
        r.register("conv", |cfg, io, rng| {
            if !matches!(cfg.kernel, 1 | 3) {
                return Err(Error::Config(format!("fusion kernel {} not in {{1, 3}}", cfg.kernel)));
            }
            let geo = ConvGeometry::new(
                io.rgb_channels + io.freq_channels,
                io.target_channels,
                cfg.kernel,
            )
            .groups(cfg.groups);
            let block = ConvBlock::new("fusion", geo, rng)?;
            Ok(Box::new(ConvFusion {
                rgb_channels: io.rgb_channels,
                block,
                out: io.target_channels,
            }))
        });
        r
    }
}

impl FusionRegistry {
    pub fn register(&mut self, name: &str, factory: FusionFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn build(
        &self,
        cfg: &FusionConfig,
        io: FusionInputs,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn Fusion>> {
        let f = self.entries.get(&cfg.kind).ok_or_else(|| Error::UnknownVariant {
            kind: "fusion",
            name: cfg.kind.clone(),
            available: self.names().join(", "),
        })?;
        f(cfg, io, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn io(r: usize, f: usize) -> FusionInputs {
        FusionInputs {
            rgb_channels: r,
            freq_channels: f,
            target_channels: r,
        }
    }

    #[test]
    fn sum_of_inverse_is_zero() {
        let reg = FusionRegistry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = FusionConfig {
            kind: "sum".into(),
            ..Default::default()
        };
        let mut f = reg.build(&cfg, io(3, 3), &mut rng).unwrap();
        let x = Tensor::from_vec([1, 3, 2, 2], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let y = f.forward(&x, &x.map(|v| -v), Mode::Eval).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(reg.build(&cfg, io(3, 4), &mut rng).is_err());
    }

    #[test]
    fn concat_shape_and_conv_projection() {
        let reg = FusionRegistry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cat = FusionConfig {
            kind: "concat".into(),
            ..Default::default()
        };
        let mut f = reg.build(&cat, io(256, 256), &mut rng).unwrap();
        let y = f
            .forward(&Tensor::zeros([1, 256, 16, 16]), &Tensor::zeros([1, 256, 16, 16]), Mode::Eval)
            .unwrap();
        assert_eq!(y.shape(), [1, 512, 16, 16]);

        let conv = FusionConfig::default();
        assert_eq!((conv.kind.as_str(), conv.kernel, conv.groups), ("conv", 1, 1));
        let mut f = reg.build(&conv, io(8, 4), &mut rng).unwrap();
        assert_eq!(f.out_channels(), 8);
        let y = f
            .forward(&Tensor::zeros([2, 8, 4, 4]), &Tensor::zeros([2, 4, 4, 4]), Mode::Train)
            .unwrap();
        assert_eq!(y.shape(), [2, 8, 4, 4]);
        assert!(f
            .forward(&Tensor::zeros([2, 8, 4, 4]), &Tensor::zeros([2, 4, 2, 2]), Mode::Train)
            .is_err());
    }

    #[test]
    fn unknown_kind() {
        let reg = FusionRegistry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = FusionConfig {
            kind: "attention".into(),
            ..Default::default()
        };
        assert!(matches!(
            reg.build(&cfg, io(2, 2), &mut rng),
            Err(Error::UnknownVariant { .. })
        ));
    }
}
