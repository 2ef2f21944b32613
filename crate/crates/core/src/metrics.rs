//! Frame- and video-level detection metrics: ROC AUC, partial AUC at a low
//! false-positive rate, and accuracy.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub video_id: String,
    pub frame_id: String,
    /// Probability of manipulation.
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Frame,
    Video,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub pauc_at_0_1: f64,
    pub accuracy: f64,
    pub n_videos: usize,
    pub n_frames: usize,
    pub level: Level,
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(crate::error::shape_err(labels.len(), scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!(
            "{pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Mann–Whitney estimate of `P(score_pos > score_neg) + ½·P(tie)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// ROC vertices `(fpr, tpr)` from the strictest threshold to the loosest;
/// tied scores produce a single diagonal step.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Area under the ROC curve over `FPR ∈ [0, max_fpr]`, divided by `max_fpr`.
pub fn pauc(scores: &[f64], labels: &[u8], max_fpr: f64) -> Result<f64> {
    if !(max_fpr > 0.0 && max_fpr <= 1.0) {
        return Err(Error::Config(format!("max_fpr {max_fpr} outside (0, 1]")));
    }
    let pts = roc_curve(scores, labels)?;
    Ok(partial_area(&pts, max_fpr) / max_fpr)
}

fn partial_area(pts: &[(f64, f64)], max_fpr: f64) -> f64 {
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= max_fpr {
            break;
        }
        if x1 <= max_fpr {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y_cut = y0 + (y1 - y0) * (max_fpr - x0) / (x1 - x0);
            area += (max_fpr - x0) * (y0 + y_cut) / 2.0;
            break;
        }
    }
    area
}

/// Fraction of samples whose thresholded prediction equals the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("accuracy needs at least one score".into()));
    }
    if scores.len() != labels.len() {
        return Err(crate::error::shape_err(labels.len(), scores.len()));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| u8::from(s >= threshold) == y)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    pub score: f64,
    pub label: u8,
    pub frames: usize,
}

/// Mean frame score per video, ordered by video id.
pub fn video_aggregate(frames: &[ScoredFrame]) -> Result<Vec<VideoScore>> {
    if frames.is_empty() {
        return Err(Error::Empty("no frames to aggregate".into()));
    }
    let mut acc: BTreeMap<&str, (f64, usize, u8)> = BTreeMap::new();
    for f in frames {
        let e = acc.entry(&f.video_id).or_insert((0.0, 0, f.label));
        if e.2 != f.label {
            return Err(Error::InconsistentLabels(f.video_id.clone()));
        }
        e.0 += f.score;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(id, (sum, n, label))| VideoScore {
            video_id: id.to_string(),
            score: sum / n as f64,
            label,
            frames: n,
        })
        .collect())
}

pub const PAUC_MAX_FPR: f64 = 0.1;

fn report(scores: &[f64], labels: &[u8], level: Level, n_videos: usize, n_frames: usize) -> Result<MetricsReport> {
    Ok(MetricsReport {
        auc: roc_auc(scores, labels)?,
        pauc_at_0_1: pauc(scores, labels, PAUC_MAX_FPR)?,
        accuracy: accuracy(scores, labels, 0.5)?,
        n_videos,
        n_frames,
        level,
    })
}

/// Frame-level and video-level reports for a set of scored frames.
pub fn evaluate_frames(frames: &[ScoredFrame]) -> Result<(MetricsReport, MetricsReport)> {
    let videos = video_aggregate(frames)?;
    let fs: Vec<f64> = frames.iter().map(|f| f.score).collect();
    let fl: Vec<u8> = frames.iter().map(|f| f.label).collect();
    let vs: Vec<f64> = videos.iter().map(|v| v.score).collect();
    let vl: Vec<u8> = videos.iter().map(|v| v.label).collect();
    Ok((
        report(&fs, &fl, Level::Frame, videos.len(), frames.len())?,
        report(&vs, &vl, Level::Video, videos.len(), frames.len())?,
    ))
}

pub fn write_scores_csv(path: &Path, frames: &[ScoredFrame]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["video_id", "frame_id", "label", "score"])
        .map_err(|e| csv_err(path, e))?;
    for f in frames {
        w.write_record([
            f.video_id.as_str(),
            f.frame_id.as_str(),
            &f.label.to_string(),
            &format!("{:.17e}", f.score),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoredFrame>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let parse_err = |what: &str| Error::Config(format!("{}: bad {what} in row {:?}", path.display(), rec));
        out.push(ScoredFrame {
            video_id: field(0).to_string(),
            frame_id: field(1).to_string(),
            label: field(2).parse().map_err(|_| parse_err("label"))?,
            score: field(3).parse().map_err(|_| parse_err("score"))?,
        });
    }
    Ok(out)
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}
