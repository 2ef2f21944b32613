//! Decoded, preprocessed frames of one split, held in memory as f32.

use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::freq::{
    normalize, preprocess_image, ChannelStats, FrequencyTensor, ImageRgb, StatsAccumulator,
    TensorCache, CHANNELS,
};
use crate::nn::Tensor;

use super::manifest::{CorpusManifest, SampleRecord};

pub fn load_image(path: &Path) -> Result<(ImageRgb, Vec<u8>)> {
    if !path.is_file() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)?.to_rgb8();
    Ok((ImageRgb::from_rgb8(&img), bytes))
}

/// Unnormalized frequency tensor of an image, through the cache when one is
/// configured. Always rounded to f32, the cache's storage precision, so the
/// result does not depend on whether the cache is on, cold or warm.
pub fn raw_frequency(img: &ImageRgb, bytes: &[u8], cache: Option<&TensorCache>) -> Result<FrequencyTensor> {
    let key = cache.map(|_| TensorCache::key(bytes));
    if let (Some(cache), Some(key)) = (cache, &key) {
        if let Some(t) = cache.get(key)? {
            if t.height() * 8 == img.height() && t.width() * 8 == img.width() {
                return Ok(t);
            }
        }
    }
    let t = preprocess_image(img, None)?;
    let t = FrequencyTensor::new(
        t.height(),
        t.width(),
        t.coeffs().iter().map(|&v| v as f32 as f64).collect(),
        false,
    )?;
    if let (Some(cache), Some(key)) = (cache, &key) {
        cache.put(key, &t)?;
    }
    Ok(t)
}

/// Channel statistics over every frame of `manifest`.
pub fn compute_stats(manifest: &CorpusManifest, cache: Option<&TensorCache>) -> Result<ChannelStats> {
    let mut acc = StatsAccumulator::new();
    for r in &manifest.records {
        let (img, bytes) = load_image(&r.path)?;
        acc.push(&raw_frequency(&img, &bytes, cache)?)?;
    }
    acc.finish()
}

/// Maps 8-bit pixels to `[-1, 1]` for the RGB branch.
pub fn rgb_scale(v: f64) -> f64 {
    v / 127.5 - 1.0
}

pub struct FrameSet {
    pub records: Vec<SampleRecord>,
    pub image_size: (usize, usize),
    rgb: Vec<f32>,
    freq: Option<Vec<f32>>,
}

impl FrameSet {
    /// Decodes every frame. With `stats`, the normalized frequency tensor is
    /// also kept (channel-major, matching the network layout).
    pub fn load(
        manifest: &CorpusManifest,
        stats: Option<&ChannelStats>,
        cache: Option<&TensorCache>,
    ) -> Result<Self> {
        let mut rgb = Vec::new();
        let mut freq = stats.map(|_| Vec::new());
        let mut size = None;
        for r in &manifest.records {
            let (img, bytes) = load_image(&r.path)?;
            let hw = (img.height(), img.width());
            match size {
                None => size = Some(hw),
                Some(s) if s != hw => return Err(shape_err(s, hw)),
                _ => {}
            }
            let (h, w) = hw;
            let px = img.pixels();
            for c in 0..3 {
                for i in 0..h * w {
                    rgb.push(rgb_scale(px[i * 3 + c]) as f32);
                }
            }
            if let (Some(stats), Some(out)) = (stats, freq.as_mut()) {
                let t = normalize(&raw_frequency(&img, &bytes, cache)?, stats)?;
                push_channel_major(&t, out);
            }
        }
        Ok(Self {
            records: manifest.records.clone(),
            image_size: size.ok_or_else(|| Error::Empty("frame set".into()))?,
            rgb,
            freq,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn has_frequency(&self) -> bool {
        self.freq.is_some()
    }

    /// `([n,3,H,W], [n,192,H/8,W/8])` for the given frame indices.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor, Option<Tensor>)> {
        let (h, w) = self.image_size;
        let rgb = gather(&self.rgb, idx, [3, h, w])?;
        let freq = match &self.freq {
            Some(f) => Some(gather(f, idx, [CHANNELS, h / 8, w / 8])?),
            None => None,
        };
        Ok((rgb, freq))
    }
}

fn gather(src: &[f32], idx: &[usize], chw: [usize; 3]) -> Result<Tensor> {
    let len: usize = chw.iter().product();
    let mut data = Vec::with_capacity(idx.len() * len);
    for &i in idx {
        let s = src
            .get(i * len..(i + 1) * len)
            .ok_or_else(|| Error::Dimension(format!("frame index {i} out of range")))?;
        data.extend(s.iter().map(|&v| v as f64));
    }
    Tensor::from_vec([idx.len(), chw[0], chw[1], chw[2]], data)
}

fn push_channel_major(t: &FrequencyTensor, out: &mut Vec<f32>) {
    let (h, w) = (t.height(), t.width());
    let c = t.channels();
    let coeffs = t.coeffs();
    for ch in 0..c {
        for p in 0..h * w {
            out.push(coeffs[p * c + ch] as f32);
        }
    }
}
