use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::regroup::FrequencyTensor;
use crate::error::{Error, Result};

pub const CACHE_ENV: &str = "FDFL_CACHE_DIR";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    shape: [usize; 3],
    dtype: String,
    byte_order: String,
}

/// On-disk cache of unnormalized frequency tensors, keyed by the SHA-256 of
/// the source image bytes. Tensors are stored as raw little-endian f32.
#[derive(Debug, Clone)]
pub struct TensorCache {
    dir: PathBuf,
}

impl TensorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(Self::new)
    }

    pub fn key(source_bytes: &[u8]) -> String {
        let digest = Sha256::digest(source_bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{key}.f32")),
            self.dir.join(format!("{key}.json")),
        )
    }

    pub fn get(&self, key: &str) -> Result<Option<FrequencyTensor>> {
        let (blob, side) = self.paths(key);
        if !blob.exists() || !side.exists() {
            return Ok(None);
        }
        let sidecar: Sidecar = serde_json::from_slice(&read(&side)?)?;
        let bytes = read(&blob)?;
        let [h, w, c] = sidecar.shape;
        if bytes.len() != h * w * c * 4 {
            return Err(Error::Dimension(format!(
                "cache blob {} has {} bytes, sidecar says {:?}",
                blob.display(),
                bytes.len(),
                sidecar.shape
            )));
        }
        let coeffs = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        FrequencyTensor::new(h, w, coeffs, false).map(Some)
    }

    pub fn put(&self, key: &str, t: &FrequencyTensor) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let (blob, side) = self.paths(key);
        let bytes: Vec<u8> = t
            .coeffs()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        std::fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
        let sidecar = Sidecar {
            shape: t.shape(),
            dtype: "float32".into(),
            byte_order: "little".into(),
        };
        std::fs::write(&side, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
