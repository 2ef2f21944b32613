use serde::{Deserialize, Serialize};

use super::color::Plane;
use super::dct::BLOCK;
use crate::error::{Error, Result};

pub const BANDS: usize = BLOCK * BLOCK;
pub const PLANES: usize = 3;
pub const CHANNELS: usize = PLANES * BANDS;

/// Channel index of band `(u, v)` of plane `p` (Y=0, Cb=1, Cr=2).
#[inline]
pub fn channel_index(plane: usize, u: usize, v: usize) -> usize {
    plane * BANDS + u * BLOCK + v
}

/// DCT coefficients regrouped so that every frequency band of every plane
/// becomes one spatial channel. Stored `(H/8) × (W/8) × 192`, channel last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTensor {
    height: usize,
    width: usize,
    coeffs: Vec<f64>,
    normalized: bool,
}

impl FrequencyTensor {
    pub fn new(height: usize, width: usize, coeffs: Vec<f64>, normalized: bool) -> Result<Self> {
        if coeffs.len() != height * width * CHANNELS {
            return Err(Error::Dimension(format!(
                "frequency tensor {height}x{width}x{CHANNELS} needs {} values, got {}",
                height * width * CHANNELS,
                coeffs.len()
            )));
        }
        Ok(Self {
            height,
            width,
            coeffs,
            normalized,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, CHANNELS]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub(crate) fn set_normalized(&mut self) {
        self.normalized = true;
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, c: usize) -> f64 {
        self.coeffs[(i * self.width + j) * CHANNELS + c]
    }

    /// Values of one channel across all block positions.
    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.coeffs.chunks_exact(CHANNELS).map(move |px| px[c])
    }
}

/// Regroups three block-DCT planes (Y, Cb, Cr) into a [`FrequencyTensor`].
pub fn regroup(planes: &[Plane; 3]) -> Result<FrequencyTensor> {
    let (h, w) = (planes[0].height, planes[0].width);
    for p in planes.iter() {
        if p.height != h || p.width != w {
            return Err(Error::Dimension(format!(
                "plane dims differ: {}x{} vs {h}x{w}",
                p.height, p.width
            )));
        }
    }
    if h % BLOCK != 0 || w % BLOCK != 0 {
        return Err(Error::Dimension(format!(
            "planes {h}x{w} not divisible by {BLOCK}"
        )));
    }
    let (bh, bw) = (h / BLOCK, w / BLOCK);
    let mut coeffs = vec![0.0; bh * bw * CHANNELS];
    for (p, plane) in planes.iter().enumerate() {
        for row in 0..h {
            let (bi, u) = (row / BLOCK, row % BLOCK);
            for col in 0..w {
                let (bj, v) = (col / BLOCK, col % BLOCK);
                coeffs[(bi * bw + bj) * CHANNELS + channel_index(p, u, v)] = plane.at(row, col);
            }
        }
    }
    FrequencyTensor::new(bh, bw, coeffs, false)
}

/// Inverse of [`regroup`].
pub fn ungroup(t: &FrequencyTensor) -> [Plane; 3] {
    let (h, w) = (t.height * BLOCK, t.width * BLOCK);
    let mut planes = [Plane::zeros(h, w), Plane::zeros(h, w), Plane::zeros(h, w)];
    for (p, plane) in planes.iter_mut().enumerate() {
        for row in 0..h {
            for col in 0..w {
                plane.data[row * w + col] = t.at(
                    row / BLOCK,
                    col / BLOCK,
                    channel_index(p, row % BLOCK, col % BLOCK),
                );
            }
        }
    }
    planes
}
