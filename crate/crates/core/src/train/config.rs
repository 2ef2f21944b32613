//! Experiment configuration: one JSON document with sections
//! `{data, model, loss, optim, run}` plus dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{FrameSampling, SyntheticConfig};
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::model::ModelConfig;
use crate::optim::OptimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Corpus root holding `train/`, `val/` and `test/` split directories.
    pub root: PathBuf,
    /// Frames kept per video when a split has no manifest yet.
    pub frame_sampling: FrameSampling,
    pub image_size: usize,
    pub n_videos: usize,
    pub val_videos: usize,
    pub test_videos: usize,
    pub frames_per_video: usize,
    pub perturbed_bands: Vec<[usize; 2]>,
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub texture_amplitude: f64,
    pub jpeg_quality: u8,
    pub paired: bool,
    /// Seed of the synthetic generator (the `synth` command's `--seed`).
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        Self {
            root: PathBuf::from("corpus"),
            frame_sampling: FrameSampling::default(),
            image_size: s.image_size,
            n_videos: s.n_videos,
            val_videos: s.val_videos,
            test_videos: s.test_videos,
            frames_per_video: s.frames_per_video,
            perturbed_bands: s.perturbed_bands,
            amplitude: s.amplitude,
            noise_sigma: s.noise_sigma,
            texture_amplitude: s.texture_amplitude,
            jpeg_quality: s.jpeg_quality,
            paired: s.paired,
            seed: s.seed,
        }
    }
}

impl DataConfig {
    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            image_size: self.image_size,
            n_videos: self.n_videos,
            val_videos: self.val_videos,
            test_videos: self.test_videos,
            frames_per_video: self.frames_per_video,
            perturbed_bands: self.perturbed_bands.clone(),
            amplitude: self.amplitude,
            noise_sigma: self.noise_sigma,
            texture_amplitude: self.texture_amplitude,
            jpeg_quality: self.jpeg_quality,
            paired: self.paired,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Hard cap on optimizer steps; 0 means `epochs` decides.
    pub max_steps: usize,
    pub batch_size: usize,
    /// Validate every this many steps; 0 validates once per epoch.
    pub eval_every: usize,
    pub eval_batch_size: usize,
    /// Seeds per ablation cell (`seed`, `seed + 1`, ...); cells report means.
    pub ablation_seeds: usize,
    /// Rows per class in `export`.
    pub export_per_class: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 10,
            max_steps: 0,
            batch_size: 32,
            eval_every: 0,
            eval_batch_size: 64,
            ablation_seeds: 1,
            export_per_class: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optim.validate()?;
        if self.loss.variant.contains("scl") {
            self.loss.scl.validate()?;
        }
        if self.run.batch_size < 2 {
            return Err(Error::Config(format!(
                "run.batch_size must be >= 2, got {}",
                self.run.batch_size
            )));
        }
        if self.run.eval_batch_size == 0 {
            return Err(Error::Config("run.eval_batch_size must be >= 1".into()));
        }
        if self.run.epochs == 0 && self.run.max_steps == 0 {
            return Err(Error::Config("set run.epochs or run.max_steps".into()));
        }
        Ok(())
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or defaults when `None`) and applies `KEY=VALUE`
    /// overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(Self::default())?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingPath(p.to_path_buf()),
                _ => Error::io(p, e),
            })?;
            let file: Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            merge(&mut v, file, "")?;
        }
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Deep-merges `src` into `dst`, rejecting keys `dst` lacks.
fn merge(dst: &mut Value, src: Value, prefix: &str) -> Result<()> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, sv) in s {
                let key = join(prefix, &k);
                let dv = d
                    .get_mut(&k)
                    .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
                merge(dv, sv, &key)?;
            }
            Ok(())
        }
        (d, s) => {
            check_type(d, &s, prefix)?;
            *d = s;
            Ok(())
        }
    }
}

fn join(prefix: &str, k: &str) -> String {
    if prefix.is_empty() {
        k.to_string()
    } else {
        format!("{prefix}.{k}")
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn check_type(existing: &Value, new: &Value, key: &str) -> Result<()> {
    let (a, b) = (type_name(existing), type_name(new));
    if a != b {
        return Err(Error::Config(format!("`{key}` expects {a}, got {b} ({new})")));
    }
    Ok(())
}

/// Applies one `a.b.c=VALUE`. The value is parsed as JSON when possible and
/// taken as a bare string otherwise; its JSON type must match the key's.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    let mut cur = &mut *root;
    for part in key.split('.') {
        cur = cur
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
    }
    let new = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    check_type(cur, &new, key)?;
    *cur = new;
    Ok(())
}
