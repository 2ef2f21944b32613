//! Corpus manifests: one JSON record per sampled frame.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LABEL_REAL: u8 = 0;
pub const LABEL_FAKE: u8 = 1;

pub fn class_dir(label: u8) -> &'static str {
    if label == LABEL_REAL {
        "real"
    } else {
        "fake"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub path: PathBuf,
    pub video_id: String,
    pub frame_id: String,
    pub label: u8,
    #[serde(default)]
    pub manipulation_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub split: String,
    pub records: Vec<SampleRecord>,
}

/// Frames kept per video, by class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSampling {
    pub real: usize,
    pub fake: usize,
}

impl Default for FrameSampling {
    fn default() -> Self {
        Self { real: 80, fake: 20 }
    }
}

impl FrameSampling {
    fn for_label(&self, label: u8) -> usize {
        if label == LABEL_REAL {
            self.real
        } else {
            self.fake
        }
    }
}

impl CorpusManifest {
    pub fn new(split: impl Into<String>, records: Vec<SampleRecord>) -> Result<Self> {
        let m = Self {
            split: split.into(),
            records,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Empty(format!("manifest for split `{}`", self.split)));
        }
        let mut seen = BTreeSet::new();
        let mut video_label = BTreeMap::new();
        for r in &self.records {
            if r.label > 1 {
                return Err(Error::Config(format!("label {} not in {{0, 1}}", r.label)));
            }
            if !seen.insert((&r.video_id, &r.frame_id)) {
                return Err(Error::Config(format!(
                    "duplicate record ({}, {})",
                    r.video_id, r.frame_id
                )));
            }
            if *video_label.entry(&r.video_id).or_insert(r.label) != r.label {
                return Err(Error::InconsistentLabels(r.video_id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `[real, fake]` frame counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let fake = self.records.iter().filter(|r| r.label == LABEL_FAKE).count();
        [self.records.len() - fake, fake]
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Writes JSON lines; paths under the manifest's directory are stored
    /// relative to it so the corpus can be moved as a whole.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new(""));
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let mut r = r.clone();
            if let Ok(rel) = r.path.strip_prefix(dir) {
                r.path = rel.to_path_buf();
            }
            let line = serde_json::to_string(&r)?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Loads a JSON-lines manifest; relative record paths resolve against
    /// the manifest's directory.
    pub fn load(path: &Path, split: &str) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut records = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut r: SampleRecord = serde_json::from_str(&line)?;
            if r.path.is_relative() {
                r.path = base.join(&r.path);
            }
            records.push(r);
        }
        Self::new(split, records)
    }

    /// Errors with the first record whose file is gone.
    pub fn check_paths(&self) -> Result<()> {
        match self.records.iter().find(|r| !r.path.is_file()) {
            Some(r) => Err(Error::MissingPath(r.path.clone())),
            None => Ok(()),
        }
    }
}

/// `k` indices evenly spaced over `0..n`, all of them when `k >= n`.
pub fn evenly_spaced(n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    (0..k).map(|i| i * n / k).collect()
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() == want_dirs {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Scans `root/{real|fake}/<video_id>/<frame>` and keeps up to the sampled
/// number of frames per video, evenly spaced by sorted file name.
pub fn build_manifest(root: &Path, split: &str, sampling: FrameSampling) -> Result<CorpusManifest> {
    if !root.is_dir() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    let mut records = Vec::new();
    for label in [LABEL_REAL, LABEL_FAKE] {
        let class_root = root.join(class_dir(label));
        if !class_root.is_dir() {
            return Err(Error::MissingPath(class_root));
        }
        for video in sorted_entries(&class_root, true)? {
            let video_id = file_name(&video);
            let frames: Vec<PathBuf> = sorted_entries(&video, false)?
                .into_iter()
                .filter(|p| is_image(p))
                .collect();
            for i in evenly_spaced(frames.len(), sampling.for_label(label)) {
                let p = &frames[i];
                records.push(SampleRecord {
                    path: p.clone(),
                    video_id: video_id.clone(),
                    frame_id: p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    label,
                    manipulation_tag: String::new(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Empty(format!("no frames under {}", root.display())));
    }
    CorpusManifest::new(split, records)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
