//! Ablation grids: each protocol expands a base config into named cells,
//! every cell is trained and evaluated with shared seeds.

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use serde::Serialize;

use super::config::ExperimentConfig;
use super::trainer::{train, Corpus, Detector};
use crate::error::{Error, Result};
use crate::loss::LOSS_VARIANTS;

#[derive(Debug, Clone)]
pub struct AblationCell {
    pub variant: String,
    pub config: ExperimentConfig,
}

pub trait AblationProtocol: Send + Sync {
    fn cells(&self, base: &ExperimentConfig) -> Vec<AblationCell>;
}

fn cell(variant: impl Into<String>, base: &ExperimentConfig, edit: impl FnOnce(&mut ExperimentConfig)) -> AblationCell {
    let mut config = base.clone();
    edit(&mut config);
    AblationCell {
        variant: variant.into(),
        config,
    }
}

/// Softmax alone and with each auxiliary loss, on the RGB backbone alone.
pub struct LossesProtocol;

impl AblationProtocol for LossesProtocol {
    fn cells(&self, base: &ExperimentConfig) -> Vec<AblationCell> {
        LOSS_VARIANTS
            .iter()
            .map(|v| {
                cell(*v, base, |c| {
                    c.loss.variant = v.to_string();
                    c.model.use_frequency = false;
                })
            })
            .collect()
    }
}

/// Fusion variants with the frequency branch on and plain softmax.
pub struct FusionProtocol;

impl AblationProtocol for FusionProtocol {
    fn cells(&self, base: &ExperimentConfig) -> Vec<AblationCell> {
        let softmax = |c: &mut ExperimentConfig, kind: &str, kernel, groups| {
            c.loss.variant = "softmax".into();
            c.model.use_frequency = true;
            c.model.fusion.kind = kind.into();
            c.model.fusion.kernel = kernel;
            c.model.fusion.groups = groups;
        };
        let mut out = vec![
            cell("concat", base, |c| softmax(c, "concat", 1, 1)),
            cell("sum", base, |c| softmax(c, "sum", 1, 1)),
        ];
        for (k, g) in [(3, 1), (1, 1), (3, 2), (1, 2)] {
            out.push(cell(format!("conv{k}x{k}_g{g}"), base, |c| softmax(c, "conv", k, g)));
        }
        out
    }
}

/// Baseline, +single-center loss, +frequency branch, both.
pub struct ComponentsProtocol;

impl AblationProtocol for ComponentsProtocol {
    fn cells(&self, base: &ExperimentConfig) -> Vec<AblationCell> {
        let set = |c: &mut ExperimentConfig, scl: bool, freq: bool| {
            c.loss.variant = if scl { "softmax+scl" } else { "softmax" }.into();
            c.model.use_frequency = freq;
        };
        vec![
            cell("baseline", base, |c| set(c, false, false)),
            cell("+SCL", base, |c| set(c, true, false)),
            cell("+AFFGM", base, |c| set(c, false, true)),
            cell("+both", base, |c| set(c, true, true)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKey {
    Lambda,
    Margin,
}

/// Grid over λ or m of the single-center loss on the RGB backbone, the
/// other one held fixed.
pub struct SweepProtocol {
    pub key: SweepKey,
    pub values: Vec<f64>,
    pub fixed: f64,
}

impl SweepProtocol {
    pub fn lambda() -> Self {
        Self {
            key: SweepKey::Lambda,
            values: vec![0.0, 0.001, 0.01, 0.1, 0.5, 1.0],
            fixed: 0.1,
        }
    }

    pub fn margin() -> Self {
        Self {
            key: SweepKey::Margin,
            values: (1..=7).map(|i| i as f64 * 0.05).collect(),
            fixed: 0.5,
        }
    }
}

impl AblationProtocol for SweepProtocol {
    fn cells(&self, base: &ExperimentConfig) -> Vec<AblationCell> {
        self.values
            .iter()
            .map(|&v| {
                let name = match self.key {
                    SweepKey::Lambda => format!("lambda={v}"),
                    SweepKey::Margin => format!("m={v:.2}"),
                };
                cell(name, base, |c| {
                    c.loss.variant = "softmax+scl".into();
                    c.model.use_frequency = false;
                    match self.key {
                        SweepKey::Lambda => {
                            c.loss.scl.lambda = v;
                            c.loss.scl.m = self.fixed;
                        }
                        SweepKey::Margin => {
                            c.loss.scl.m = v;
                            c.loss.scl.lambda = self.fixed;
                        }
                    }
                })
            })
            .collect()
    }
}

pub struct ProtocolRegistry {
    entries: BTreeMap<String, Box<dyn AblationProtocol>>,
}

impl Default for ProtocolRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register("losses", Box::new(LossesProtocol));
        r.register("fusion", Box::new(FusionProtocol));
        r.register("components", Box::new(ComponentsProtocol));
        r.register("sweep_lambda", Box::new(SweepProtocol::lambda()));
        r.register("sweep_m", Box::new(SweepProtocol::margin()));
        r
    }
}

impl ProtocolRegistry {
    pub fn register(&mut self, name: &str, p: Box<dyn AblationProtocol>) {
        self.entries.insert(name.to_string(), p);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn AblationProtocol> {
        self.entries
            .get(name)
            .map(|p| p.as_ref())
            .ok_or_else(|| Error::UnknownVariant {
                kind: "ablation protocol",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    /// Mean over seeds of the evaluation-split video AUC.
    pub auc: f64,
    pub pauc_0_1: f64,
    pub val_auc: f64,
    pub seed_aucs: Vec<f64>,
    pub error: Option<String>,
}

/// Trains every cell for `run.ablation_seeds` consecutive seeds and reports
/// the best-validation checkpoint on the test split (validation when the
/// corpus has none). A failing cell is recorded, not fatal.
pub fn run_ablation(protocol: &dyn AblationProtocol, base: &ExperimentConfig, corpus: &Corpus) -> Vec<AblationRow> {
    let eval = corpus.test.as_ref().unwrap_or(&corpus.val);
    let seeds = base.run.ablation_seeds.max(1) as u64;
    protocol
        .cells(base)
        .into_iter()
        .map(|cell| {
            let mut aucs = Vec::new();
            let mut paucs = Vec::new();
            let mut vals = Vec::new();
            let mut error = None;
            for s in 0..seeds {
                let mut cfg = cell.config.clone();
                cfg.run.seed = base.run.seed + s;
                let res = train(&cfg, corpus).and_then(|out| {
                    let mut det = Detector::from_checkpoint(&out.best)?;
                    Ok((det.evaluate(eval)?, out.best_val_auc))
                });
                match res {
                    Ok((r, val)) => {
                        info!("{} seed {}: AUC {:.4}", cell.variant, cfg.run.seed, r.video.auc);
                        aucs.push(r.video.auc);
                        paucs.push(r.video.pauc_at_0_1);
                        vals.push(val);
                    }
                    Err(e) => {
                        warn!("{} seed {} failed: {e}", cell.variant, cfg.run.seed);
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            let mean = |v: &[f64]| {
                if v.is_empty() || error.is_some() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            AblationRow {
                variant: cell.variant,
                auc: mean(&aucs),
                pauc_0_1: mean(&paucs),
                val_auc: mean(&vals),
                seed_aucs: aucs,
                error,
            }
        })
        .collect()
}

/// `variant,auc,pauc_0_1,error`.
pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let err = |e: csv::Error| crate::metrics::csv_err(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["variant", "auc", "pauc_0_1", "error"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.variant.as_str(),
            &format!("{:.6}", r.auc),
            &format!("{:.6}", r.pauc_0_1),
            r.error.as_deref().unwrap_or(""),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_shapes() {
        let reg = ProtocolRegistry::default();
        let base = ExperimentConfig::default();
        let names = |p: &str| -> Vec<String> {
            reg.get(p).unwrap().cells(&base).into_iter().map(|c| c.variant).collect()
        };
        assert_eq!(names("components"), ["baseline", "+SCL", "+AFFGM", "+both"]);
        assert_eq!(names("fusion").len(), 6);
        assert_eq!(names("losses").len(), 4);
        assert_eq!(names("sweep_lambda").len(), 6);
        assert_eq!(
            names("sweep_m"),
            ["m=0.05", "m=0.10", "m=0.15", "m=0.20", "m=0.25", "m=0.30", "m=0.35"]
        );
        let m = reg.get("sweep_m").unwrap().cells(&base);
        assert!(m.iter().all(|c| c.config.loss.scl.lambda == 0.5));
        let l = reg.get("sweep_lambda").unwrap().cells(&base);
        assert!(l.iter().all(|c| c.config.loss.scl.m == 0.1));
        assert!(l.iter().chain(&m).all(|c| !c.config.model.use_frequency));
        assert!(reg.get("table9").is_err());
    }
}
