//! Frequency mining block: grouped 3×3 conv block (one group per Y/Cb/Cr
//! plane), plain 3×3 conv block, max-pool, channel attention, 1×1 conv.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{CHANNELS, PLANES};
use crate::nn::{
    ChannelAttention, Conv2d, ConvBlock, ConvGeometry, Layer, MaxPool2d, Mode, ParamVisitor,
    Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AfimbConfig {
    pub grouped_conv_out: usize,
    pub mid_channels: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    /// Hidden width of the two attention linear layers.
    pub attention_reduction: usize,
    pub out_channels: usize,
    pub attention: bool,
}

impl Default for AfimbConfig {
    fn default() -> Self {
        Self {
            grouped_conv_out: 192,
            mid_channels: 256,
            pool_kernel: 2,
            pool_stride: 2,
            attention_reduction: 64,
            out_channels: 256,
            attention: true,
        }
    }
}

impl AfimbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grouped_conv_out % PLANES != 0 {
            return Err(Error::Config(format!(
                "grouped_conv_out {} not divisible by {PLANES}",
                self.grouped_conv_out
            )));
        }
        let counts = [
            self.grouped_conv_out,
            self.mid_channels,
            self.pool_kernel,
            self.pool_stride,
            self.attention_reduction,
            self.out_channels,
        ];
        if counts.contains(&0) {
            return Err(Error::Config(format!("AFIMB sizes must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

pub struct Afimb {
    pub grouped: ConvBlock,
    pub mid: ConvBlock,
    pool: MaxPool2d,
    pub attention: Option<ChannelAttention>,
    pub project: Conv2d,
}

impl Afimb {
    pub fn new(name: &str, cfg: &AfimbConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let grouped = ConvBlock::new(
            &format!("{name}.grouped"),
            ConvGeometry::new(CHANNELS, cfg.grouped_conv_out, 3).groups(PLANES),
            rng,
        )?;
        let mid = ConvBlock::new(
            &format!("{name}.mid"),
            ConvGeometry::new(cfg.grouped_conv_out, cfg.mid_channels, 3),
            rng,
        )?;
        let pool = MaxPool2d::new(cfg.pool_kernel, cfg.pool_stride)?;
        let attention = cfg.attention.then(|| {
            ChannelAttention::new(
                &format!("{name}.attention"),
                cfg.mid_channels,
                cfg.attention_reduction,
                rng,
            )
        });
        let project = Conv2d::new(
            &format!("{name}.project"),
            ConvGeometry::new(cfg.mid_channels, cfg.out_channels, 1),
            true,
            rng,
        )?;
        Ok(Self {
            grouped,
            mid,
            pool,
            attention,
            project,
        })
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.pool.output_size(h, w)
    }
}

impl Layer for Afimb {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.channels() != CHANNELS {
            return Err(crate::error::shape_err(
                format!("{CHANNELS} frequency channels"),
                x.shape(),
            ));
        }
        let y = self.grouped.forward(x, mode)?;
        let y = self.mid.forward(&y, mode)?;
        let mut y = self.pool.forward(&y, mode)?;
        if let Some(att) = self.attention.as_mut() {
            y = att.forward(&y, mode)?;
        }
        self.project.forward(&y, mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = self.project.backward(grad)?;
        if let Some(att) = self.attention.as_mut() {
            g = att.backward(&g)?;
        }
        let g = self.pool.backward(&g)?;
        let g = self.mid.backward(&g)?;
        self.grouped.backward(&g)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        self.grouped.visit_params(f);
        self.mid.visit_params(f);
        if let Some(att) = self.attention.as_mut() {
            att.visit_params(f);
        }
        self.project.visit_params(f);
    }
}
