//! Training loop, evaluation and embedding export.

use std::path::Path;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::ExperimentConfig;
use super::history::HistoryRecord;
use crate::data::{compute_stats, load_split, CorpusManifest, FrameSet, MixedBatchSampler, LABEL_REAL};
use crate::error::{Error, Result};
use crate::freq::{ChannelStats, TensorCache};
use crate::loss::{
    manipulated_probability, softmax_cross_entropy, AuxLoss, AuxStats, EmbeddingBatch,
    LossRegistry,
};
use crate::metrics::{evaluate_frames, MetricsReport, ScoredFrame};
use crate::model::Model;
use crate::nn::{Mode, Param, ParamVisitor};
use crate::optim::Optimizer;

/// Independent RNG streams so that, e.g., the loss variant never shifts
/// model initialization or data order.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Model = 1,
    Loss = 2,
    Sampler = 3,
    Export = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// Model, auxiliary loss and frequency statistics: everything a checkpoint
/// must restore to reproduce scores.
pub struct Detector {
    pub config: ExperimentConfig,
    pub model: Model,
    pub aux: Option<Box<dyn AuxLoss>>,
    pub stats: Option<ChannelStats>,
}

impl Detector {
    pub fn new(config: &ExperimentConfig, stats: Option<ChannelStats>) -> Result<Self> {
        Self::with_registry(config, stats, &LossRegistry::default())
    }

    pub fn with_registry(
        config: &ExperimentConfig,
        stats: Option<ChannelStats>,
        losses: &LossRegistry,
    ) -> Result<Self> {
        config.validate()?;
        let seed = config.run.seed;
        let model = Model::new(&config.model, &mut stream_rng(seed, Stream::Model))?;
        let aux = losses.build(
            &config.loss,
            config.model.embedding_dim,
            &mut stream_rng(seed, Stream::Loss),
        )?;
        Ok(Self {
            config: config.clone(),
            model,
            aux,
            stats,
        })
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor) {
        self.model.visit_params(f);
        if let Some(aux) = self.aux.as_mut() {
            aux.visit_params(f);
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    /// Parameter values, with gradients cleared.
    pub fn snapshot(&mut self) -> Vec<Param> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| {
            let mut c = p.clone();
            c.zero_grad();
            out.push(c)
        });
        out
    }

    /// Copies values from `saved`, matched by position, name and length.
    pub fn restore(&mut self, saved: &[Param]) -> Result<()> {
        let mut i = 0;
        let mut err = None;
        self.visit_params(&mut |p| {
            if err.is_some() {
                return;
            }
            match saved.get(i) {
                Some(s) if s.name == p.name && s.len() == p.len() => {
                    p.value.copy_from_slice(&s.value)
                }
                Some(s) => {
                    err = Some(Error::Config(format!(
                        "checkpoint tensor `{}` ({}) does not match model tensor `{}` ({})",
                        s.name,
                        s.len(),
                        p.name,
                        p.len()
                    )))
                }
                None => err = Some(Error::Config("checkpoint has too few tensors".into())),
            }
            i += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if i != saved.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, model expects {i}",
                saved.len()
            )));
        }
        Ok(())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut det = Self::new(&ck.config, ck.stats.clone())?;
        det.restore(&ck.params)?;
        Ok(det)
    }

    pub fn checkpoint(
        &mut self,
        step: u64,
        history: Vec<HistoryRecord>,
        best_val_auc: Option<f64>,
    ) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            step,
            stats: self.stats.clone(),
            params: self.snapshot(),
            history,
            best_val_auc,
        }
    }

    fn inputs(&self, frames: &FrameSet, idx: &[usize]) -> Result<(crate::nn::Tensor, Option<crate::nn::Tensor>)> {
        let (rgb, freq) = frames.batch(idx)?;
        if !self.model.uses_frequency() {
            return Ok((rgb, None));
        }
        match freq {
            Some(f) => Ok((rgb, Some(f))),
            None => Err(Error::Config(
                "frames were loaded without frequency features".into(),
            )),
        }
    }

    /// Evaluation-mode manipulation probabilities and embeddings for `idx`.
    pub fn infer(&mut self, frames: &FrameSet, idx: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let bs = self.config.run.eval_batch_size.max(1);
        let mut probs = Vec::with_capacity(idx.len());
        let mut emb = Vec::with_capacity(idx.len() * self.config.model.embedding_dim);
        for chunk in idx.chunks(bs) {
            let (rgb, freq) = self.inputs(frames, chunk)?;
            let out = self.model.forward(&rgb, freq.as_ref(), Mode::Eval)?;
            probs.extend(manipulated_probability(&out.logits));
            emb.extend(out.embeddings);
        }
        Ok((probs, emb))
    }

    pub fn score(&mut self, frames: &FrameSet) -> Result<Vec<ScoredFrame>> {
        let idx: Vec<usize> = (0..frames.len()).collect();
        let (probs, _) = self.infer(frames, &idx)?;
        Ok(frames
            .records
            .iter()
            .zip(probs)
            .map(|(r, score)| ScoredFrame {
                video_id: r.video_id.clone(),
                frame_id: r.frame_id.clone(),
                score,
                label: r.label,
            })
            .collect())
    }

    pub fn evaluate(&mut self, frames: &FrameSet) -> Result<EvalReport> {
        let scores = self.score(frames)?;
        let (frame, video) = evaluate_frames(&scores)?;
        Ok(EvalReport {
            frame,
            video,
            scores,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub frame: MetricsReport,
    pub video: MetricsReport,
    #[serde(skip)]
    pub scores: Vec<ScoredFrame>,
}

/// The three splits of a corpus, preprocessed with train-split statistics.
pub struct Corpus {
    pub train: FrameSet,
    pub val: FrameSet,
    pub test: Option<FrameSet>,
    pub stats: ChannelStats,
}

impl Corpus {
    pub fn load(root: &Path, cache: Option<&TensorCache>) -> Result<Self> {
        let train_m = load_split(root, "train")?;
        let stats = compute_stats(&train_m, cache)?;
        Self::load_with_stats(root, &train_m, stats, cache)
    }

    pub fn load_with_stats(
        root: &Path,
        train_m: &CorpusManifest,
        stats: ChannelStats,
        cache: Option<&TensorCache>,
    ) -> Result<Self> {
        let train = FrameSet::load(train_m, Some(&stats), cache)?;
        let val = FrameSet::load(&load_split(root, "val")?, Some(&stats), cache)?;
        let test = match load_split(root, "test") {
            Ok(m) => Some(FrameSet::load(&m, Some(&stats), cache)?),
            Err(Error::MissingPath(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            train,
            val,
            test,
            stats,
        })
    }
}

pub struct TrainOutcome {
    /// Parameters with the best validation video AUC (the initial model
    /// included).
    pub best: Checkpoint,
    /// Parameters after the last step.
    pub last: Checkpoint,
    pub history: Vec<HistoryRecord>,
    pub initial_val_auc: f64,
    pub best_val_auc: f64,
    pub final_loss: f64,
    /// Batches where the single-center loss saw only one class.
    pub scl_inactive_batches: u64,
}

pub fn planned_steps(cfg: &ExperimentConfig, batches_per_epoch: usize) -> usize {
    let by_epochs = cfg.run.epochs * batches_per_epoch;
    match (cfg.run.max_steps, by_epochs) {
        (0, n) => n,
        (m, 0) => m,
        (m, n) => m.min(n),
    }
}

pub fn train(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    train_with(Detector::new(cfg, Some(corpus.stats.clone()))?, corpus)
}

pub fn train_with(mut det: Detector, corpus: &Corpus) -> Result<TrainOutcome> {
    let cfg = det.config.clone();
    let mut opt = Optimizer::new(cfg.optim.clone())?;
    let labels = corpus.train.labels();
    let mut sampler = MixedBatchSampler::new(
        &labels,
        cfg.run.batch_size,
        rand::RngCore::next_u64(&mut stream_rng(cfg.run.seed, Stream::Sampler)),
    )?;
    let per_epoch = sampler.batches_per_epoch();
    let total = planned_steps(&cfg, per_epoch);
    let eval_every = if cfg.run.eval_every == 0 {
        per_epoch
    } else {
        cfg.run.eval_every
    };
    let dim = cfg.model.embedding_dim;

    let initial = det.evaluate(&corpus.val)?;
    let initial_val_auc = initial.video.auc;
    let mut best_val_auc = initial_val_auc;
    let mut best_params = det.snapshot();
    let mut best_step = 0;
    let mut history = Vec::with_capacity(total);
    let mut final_loss = f64::NAN;
    let mut inactive = 0u64;
    info!(
        "training {total} steps ({per_epoch}/epoch), initial val video AUC {initial_val_auc:.4}"
    );

    for step in 1..=total {
        let idx = sampler.next().expect("sampler is endless");
        let batch_labels: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let (rgb, freq) = det.inputs(&corpus.train, &idx)?;
        det.zero_grad();
        let out = det.model.forward(&rgb, freq.as_ref(), Mode::Train)?;
        let ce = softmax_cross_entropy(&out.logits, &batch_labels, 2)?;
        let mut rec = HistoryRecord {
            step: step as u64,
            epoch: ((step - 1) / per_epoch) as u64,
            cross_entropy: ce.loss,
            lr: opt.current_lr(),
            ..Default::default()
        };
        let aux_grad = match det.aux.as_mut() {
            Some(aux) => {
                let batch = EmbeddingBatch::new(dim, out.embeddings, batch_labels)?;
                let a = aux.compute(&batch)?;
                rec.aux_loss = a.loss;
                rec.aux_weight = a.weight;
                if let AuxStats::Scl(s) = &a.stats {
                    rec.m_nat = Some(s.m_nat);
                    rec.m_man = Some(s.m_man);
                    rec.hinge_arg = Some(s.hinge_arg);
                    rec.scl_active = Some(s.active);
                    if !s.active {
                        inactive += 1;
                    }
                }
                Some(a.grad_embeddings)
            }
            None => None,
        };
        rec.loss = rec.cross_entropy + rec.aux_weight * rec.aux_loss;
        if !rec.loss.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!(
                    "cross-entropy {} aux {} (weight {})",
                    rec.cross_entropy, rec.aux_loss, rec.aux_weight
                ),
            });
        }
        det.model.backward(&ce.grad_embeddings, aux_grad.as_deref())?;
        {
            let mut ctx = opt.begin_step();
            det.visit_params(&mut |p| ctx.update(p));
        }
        final_loss = rec.loss;
        debug!("step {step} loss {:.6} ce {:.6} aux {:.6}", rec.loss, rec.cross_entropy, rec.aux_loss);

        if step % eval_every == 0 || step == total {
            let r = det.evaluate(&corpus.val)?;
            rec.val_auc = Some(r.video.auc);
            rec.val_pauc = Some(r.video.pauc_at_0_1);
            rec.val_frame_auc = Some(r.frame.auc);
            info!(
                "step {step}/{total} loss {:.4} val video AUC {:.4} pAUC {:.4}",
                rec.loss, r.video.auc, r.video.pauc_at_0_1
            );
            if r.video.auc > best_val_auc {
                best_val_auc = r.video.auc;
                best_params = det.snapshot();
                best_step = step;
            }
        }
        history.push(rec);
    }
    if inactive > 0 {
        warn!("{inactive} batches had a single class under the single-center loss");
    }

    let last = det.checkpoint(total as u64, history.clone(), Some(best_val_auc));
    det.restore(&best_params)?;
    let best = det.checkpoint(best_step as u64, history.clone(), Some(best_val_auc));
    Ok(TrainOutcome {
        best,
        last,
        history,
        initial_val_auc,
        best_val_auc,
        final_loss,
        scl_inactive_batches: inactive,
    })
}

/// One exported embedding row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportRow {
    pub video_id: String,
    pub frame_id: String,
    pub label: u8,
    pub distance_to_center: f64,
    pub embedding: Vec<f64>,
}

pub struct EmbeddingExport {
    pub center: Vec<f64>,
    pub rows: Vec<ExportRow>,
}

/// Seeded sample of up to `per_class` frames per class. The center is the
/// loss's natural anchor when it has one, else the mean natural embedding.
pub fn export_embeddings(
    det: &mut Detector,
    frames: &FrameSet,
    per_class: usize,
    seed: u64,
) -> Result<EmbeddingExport> {
    let dim = det.config.model.embedding_dim;
    let mut rng = stream_rng(seed, Stream::Export);
    let mut picked = Vec::new();
    for label in [0u8, 1] {
        let mut idx: Vec<usize> = (0..frames.len())
            .filter(|&i| frames.records[i].label == label)
            .collect();
        if idx.len() < per_class {
            warn!(
                "requested {per_class} frames of class {label}, only {} available",
                idx.len()
            );
        }
        idx.shuffle(&mut rng);
        idx.truncate(per_class);
        idx.sort_unstable();
        picked.extend(idx);
    }
    let center = match det.aux.as_ref().and_then(|a| a.natural_center()) {
        Some(c) => c,
        None => {
            let natural: Vec<usize> = (0..frames.len())
                .filter(|&i| frames.records[i].label == LABEL_REAL)
                .collect();
            if natural.is_empty() {
                return Err(Error::SingleClass("no natural frames to center on".into()));
            }
            let (_, emb) = det.infer(frames, &natural)?;
            let mut c = vec![0.0; dim];
            for row in emb.chunks_exact(dim) {
                c.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            c.iter_mut().for_each(|a| *a /= natural.len() as f64);
            c
        }
    };
    let (_, emb) = det.infer(frames, &picked)?;
    let rows = picked
        .iter()
        .zip(emb.chunks_exact(dim))
        .map(|(&i, e)| {
            let r = &frames.records[i];
            ExportRow {
                video_id: r.video_id.clone(),
                frame_id: r.frame_id.clone(),
                label: r.label,
                distance_to_center: distance(e, &center),
                embedding: e.to_vec(),
            }
        })
        .collect();
    Ok(EmbeddingExport { center, rows })
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl EmbeddingExport {
    /// `video_id,frame_id,label,distance_to_center,e0,...,e{D-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| crate::metrics::csv_err(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let dim = self.center.len();
        let mut header = vec![
            "video_id".to_string(),
            "frame_id".into(),
            "label".into(),
            "distance_to_center".into(),
        ];
        header.extend((0..dim).map(|i| format!("e{i}")));
        w.write_record(&header).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.video_id.clone(),
                r.frame_id.clone(),
                r.label.to_string(),
                format!("{:.17e}", r.distance_to_center),
            ];
            rec.extend(r.embedding.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_center(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.center)?).map_err(|e| Error::io(path, e))
    }
}
