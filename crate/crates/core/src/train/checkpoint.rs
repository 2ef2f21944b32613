//! Checkpoint directories: `checkpoint.json` plus one little-endian f64
//! blob per parameter tensor and the metrics history as JSON lines.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::history::HistoryRecord;
use crate::error::{Error, Result};
use crate::freq::ChannelStats;
use crate::nn::{Param, ParamKind};

pub const DESCRIPTOR: &str = "checkpoint.json";
pub const HISTORY: &str = "history.jsonl";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub step: u64,
    pub stats: Option<ChannelStats>,
    /// Model parameters followed by loss parameters, in visit order.
    pub params: Vec<Param>,
    pub history: Vec<HistoryRecord>,
    pub best_val_auc: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    format_version: u32,
    step: u64,
    best_val_auc: Option<f64>,
    config: ExperimentConfig,
    stats: Option<ChannelStats>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    kind: String,
    len: usize,
    file: String,
}

fn kind_str(k: ParamKind) -> &'static str {
    match k {
        ParamKind::Weight => "weight",
        ParamKind::NoDecay => "no_decay",
        ParamKind::Buffer => "buffer",
    }
}

fn parse_kind(s: &str) -> Result<ParamKind> {
    match s {
        "weight" => Ok(ParamKind::Weight),
        "no_decay" => Ok(ParamKind::NoDecay),
        "buffer" => Ok(ParamKind::Buffer),
        _ => Err(Error::Config(format!("unknown tensor kind `{s}` in checkpoint"))),
    }
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let blobs = dir.join("tensors");
        fs::create_dir_all(&blobs).map_err(|e| Error::io(&blobs, e))?;
        let mut tensors = Vec::with_capacity(self.params.len());
        for (i, p) in self.params.iter().enumerate() {
            let file = format!("tensors/{i:04}.f64");
            let bytes: Vec<u8> = p.value.iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            tensors.push(TensorEntry {
                name: p.name.clone(),
                kind: kind_str(p.kind).into(),
                len: p.len(),
                file,
            });
        }
        let desc = Descriptor {
            format_version: FORMAT_VERSION,
            step: self.step,
            best_val_auc: self.best_val_auc,
            config: self.config.clone(),
            stats: self.stats.clone(),
            tensors,
        };
        let path = dir.join(DESCRIPTOR);
        fs::write(&path, serde_json::to_vec_pretty(&desc)?).map_err(|e| Error::io(&path, e))?;
        write_history(&dir.join(HISTORY), &self.history)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(DESCRIPTOR);
        if !path.is_file() {
            return Err(Error::MissingPath(path));
        }
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let desc: Descriptor = serde_json::from_slice(&text)?;
        if desc.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} unsupported (expected {FORMAT_VERSION})",
                desc.format_version
            )));
        }
        let mut params = Vec::with_capacity(desc.tensors.len());
        for t in &desc.tensors {
            let p = dir.join(&t.file);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if bytes.len() != t.len * 8 {
                return Err(Error::Dimension(format!(
                    "{} holds {} bytes, descriptor says {} values",
                    p.display(),
                    bytes.len(),
                    t.len
                )));
            }
            let value = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            params.push(Param::new(t.name.clone(), parse_kind(&t.kind)?, value));
        }
        let hist_path = dir.join(HISTORY);
        let history = if hist_path.is_file() {
            read_history(&hist_path)?
        } else {
            Vec::new()
        };
        Ok(Self {
            config: desc.config,
            step: desc.step,
            stats: desc.stats,
            params,
            history,
            best_val_auc: desc.best_val_auc,
        })
    }
}

pub fn write_history(path: &Path, history: &[HistoryRecord]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for h in history {
        writeln!(f, "{}", serde_json::to_string(h)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
