use std::path::Path;

use serde::{Deserialize, Serialize};

use super::regroup::{FrequencyTensor, CHANNELS};
use crate::error::{Error, Result};

pub const EPSILON_STD: f64 = 1e-6;
pub const LAYOUT: &str = "plane_major_uv";

/// Per-channel mean and standard deviation of a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of tensors accumulated.
    pub count: u64,
    pub layout: String,
}

impl ChannelStats {
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; CHANNELS],
            std: vec![1.0; CHANNELS],
            count: 1,
            layout: LAYOUT.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != CHANNELS || self.std.len() != CHANNELS {
            return Err(Error::Dimension(format!(
                "stats carry {}/{} channels, expected {CHANNELS}",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.count == 0 {
            return Err(Error::Empty("channel stats accumulated no tensors".into()));
        }
        if self.layout != LAYOUT {
            return Err(Error::Config(format!(
                "stats layout `{}` is not `{LAYOUT}`",
                self.layout
            )));
        }
        if self.std.iter().any(|&s| !(s >= EPSILON_STD) || !s.is_finite()) {
            return Err(Error::Config("stats std below floor or non-finite".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stats: Self = serde_json::from_str(&text)?;
        stats.validate()?;
        Ok(stats)
    }
}

/// Streaming per-channel moments (Welford updates, Chan merge).
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    tensors: u64,
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    shape: Option<(usize, usize)>,
}

impl Default for StatsAccumulator {
    fn default() -> Self {
        Self {
            tensors: 0,
            n: 0,
            mean: vec![0.0; CHANNELS],
            m2: vec![0.0; CHANNELS],
            shape: None,
        }
    }
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensors(&self) -> u64 {
        self.tensors
    }

    pub fn push(&mut self, t: &FrequencyTensor) -> Result<()> {
        if t.is_normalized() {
            return Err(Error::AlreadyNormalized);
        }
        let shape = (t.height(), t.width());
        match self.shape {
            None => self.shape = Some(shape),
            Some(s) if s != shape => {
                return Err(crate::error::shape_err(s, shape));
            }
            _ => {}
        }
        // Per-tensor moments first, then merge; keeps precision on large corpora.
        let m = (t.height() * t.width()) as u64;
        let mut local_mean = vec![0.0; CHANNELS];
        for px in t.coeffs().chunks_exact(CHANNELS) {
            for (acc, v) in local_mean.iter_mut().zip(px) {
                *acc += v;
            }
        }
        local_mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut local_m2 = vec![0.0; CHANNELS];
        for px in t.coeffs().chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                let d = px[c] - local_mean[c];
                local_m2[c] += d * d;
            }
        }
        self.combine(1, m, &local_mean, &local_m2);
        Ok(())
    }

    fn combine(&mut self, tensors: u64, n_b: u64, mean_b: &[f64], m2_b: &[f64]) {
        if n_b == 0 {
            return;
        }
        let n_a = self.n as f64;
        let nb = n_b as f64;
        let total = n_a + nb;
        for c in 0..CHANNELS {
            let delta = mean_b[c] - self.mean[c];
            self.mean[c] += delta * nb / total;
            self.m2[c] += m2_b[c] + delta * delta * n_a * nb / total;
        }
        self.n += n_b;
        self.tensors += tensors;
    }

    /// Merges an independently accumulated shard.
    pub fn merge(&mut self, other: &StatsAccumulator) -> Result<()> {
        if let (Some(a), Some(b)) = (self.shape, other.shape) {
            if a != b {
                return Err(crate::error::shape_err(a, b));
            }
        }
        if self.shape.is_none() {
            self.shape = other.shape;
        }
        self.combine(other.tensors, other.n, &other.mean, &other.m2);
        Ok(())
    }

    pub fn finish(&self) -> Result<ChannelStats> {
        if self.tensors == 0 {
            return Err(Error::Empty("no tensors to compute channel stats".into()));
        }
        let n = self.n as f64;
        Ok(ChannelStats {
            mean: self.mean.clone(),
            std: self
                .m2
                .iter()
                .map(|m2| (m2 / n).sqrt().max(EPSILON_STD))
                .collect(),
            count: self.tensors,
            layout: LAYOUT.to_string(),
        })
    }
}

pub fn compute_channel_stats<'a, I>(corpus: I) -> Result<ChannelStats>
where
    I: IntoIterator<Item = &'a FrequencyTensor>,
{
    let mut acc = StatsAccumulator::new();
    for t in corpus {
        acc.push(t)?;
    }
    acc.finish()
}

pub fn normalize(t: &FrequencyTensor, stats: &ChannelStats) -> Result<FrequencyTensor> {
    if t.is_normalized() {
        return Err(Error::AlreadyNormalized);
    }
    if stats.mean.len() != CHANNELS || stats.std.len() != CHANNELS {
        return Err(crate::error::shape_err(CHANNELS, stats.mean.len()));
    }
    if stats.count == 0 {
        return Err(Error::Empty("channel stats accumulated no tensors".into()));
    }
    let mut out = t.clone();
    for px in out.coeffs_mut().chunks_exact_mut(CHANNELS) {
        for c in 0..CHANNELS {
            px[c] = (px[c] - stats.mean[c]) / stats.std[c];
        }
    }
    out.set_normalized();
    Ok(out)
}
