use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use fdfl_core::data::{compute_stats, load_split, synth_generate, FrameSet};
use fdfl_core::freq::TensorCache;
use fdfl_core::metrics::{read_scores_csv, write_scores_csv};
use fdfl_core::plot;
use fdfl_core::train::{
    export_embeddings, run_ablation, train, write_ablation_csv, write_history, Checkpoint, Corpus,
    Detector, ExperimentConfig, ProtocolRegistry,
};
use fdfl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fdfl", version, about = "Frequency-aware face forgery detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON with sections data, model, loss, optim, run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set loss.scl.m=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Generator seed for `synth`, training seed otherwise.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (default output: data.root).
    Synth,
    /// Frequency channel statistics of the training split.
    Stats,
    /// Train and keep the best-validation checkpoint.
    Train,
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Corpus root; defaults to the checkpoint's data.root.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Run an ablation grid.
    Ablate {
        #[arg(long)]
        protocol: String,
    },
    /// Export embeddings and distances to the natural center.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Frames per class; defaults to run.export_per_class.
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Render a figure and its CSV.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// scores.csv (roc), embeddings.csv (hist), ablation CSV (sweep) or
        /// corpus root (energy).
        #[arg(long)]
        input: PathBuf,
        /// Split for `energy`.
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value_t = 30)]
        bins: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Roc,
    Hist,
    Energy,
    Sweep,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}

fn config(cli: &Cli, seed_key: &str) -> Result<ExperimentConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("{seed_key}={s}"));
    }
    ExperimentConfig::load(cli.config.as_deref(), &overrides)
}

fn out_dir(cli: &Cli, default: &Path) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| default.to_path_buf());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Writes one line to stdout; a closed pipe (`fdfl eval ... | head`) is not an error.
fn emit(line: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let cache = TensorCache::from_env();
    match &cli.command {
        Command::Synth => {
            let cfg = config(&cli, "data.seed")?;
            let root = out_dir(&cli, &cfg.data.root)?;
            let s = synth_generate(&cfg.data.synthetic(), &root)?;
            for (split, path, [real, fake]) in &s.manifests {
                emit(&format!("{split}: {real} real, {fake} fake frames -> {}", path.display()))?;
            }
            emit(&format!("corpus hash {}", s.hash))?;
            write_json(
                &root.join("synth_summary.json"),
                &json!({
                    "hash": s.hash,
                    "splits": s.manifests.iter().map(|(split, path, c)| json!({
                        "split": split, "manifest": path, "real": c[0], "fake": c[1]
                    })).collect::<Vec<_>>(),
                }),
            )
        }
        Command::Stats => {
            let cfg = config(&cli, "run.seed")?;
            let dir = out_dir(&cli, Path::new("."))?;
            let m = load_split(&cfg.data.root, "train")?;
            let stats = compute_stats(&m, cache.as_ref())?;
            let path = dir.join("stats.json");
            stats.save(&path)?;
            info!("stats over {} train frames -> {}", m.records.len(), path.display());
            Ok(())
        }
        Command::Train => {
            let cfg = config(&cli, "run.seed")?;
            let dir = out_dir(&cli, Path::new("run"))?;
            let corpus = Corpus::load(&cfg.data.root, cache.as_ref())?;
            write_json(&dir.join("config.json"), &cfg)?;
            let out = train(&cfg, &corpus)?;
            out.best.save(&dir.join("checkpoint"))?;
            out.last.save(&dir.join("last"))?;
            write_history(&dir.join("history.jsonl"), &out.history)?;
            let mut summary = json!({
                "best_step": out.best.step,
                "initial_val_auc": out.initial_val_auc,
                "best_val_auc": out.best_val_auc,
                "final_loss": out.final_loss,
                "scl_inactive_batches": out.scl_inactive_batches,
            });
            if let Some(test) = &corpus.test {
                let r = Detector::from_checkpoint(&out.best)?.evaluate(test)?;
                summary["test"] = json!({ "frame": r.frame, "video": r.video });
                write_scores_csv(&dir.join("test_scores.csv"), &r.scores)?;
            }
            write_json(&dir.join("summary.json"), &summary)
        }
        Command::Eval {
            checkpoint,
            split,
            corpus,
        } => {
            let ck = Checkpoint::load(checkpoint)?;
            let dir = out_dir(&cli, checkpoint)?;
            let frames = load_frames(&ck, corpus.as_deref(), split, cache.as_ref())?;
            let r = Detector::from_checkpoint(&ck)?.evaluate(&frames)?;
            let report = json!({ "split": split, "frame": r.frame, "video": r.video });
            write_json(&dir.join(format!("metrics_{split}.json")), &report)?;
            write_scores_csv(&dir.join(format!("scores_{split}.csv")), &r.scores)?;
            emit(&serde_json::to_string_pretty(&report)?)
        }
        Command::Ablate { protocol } => {
            let cfg = config(&cli, "run.seed")?;
            let reg = ProtocolRegistry::default();
            let p = reg.get(protocol)?;
            let dir = out_dir(&cli, Path::new("ablation"))?;
            let corpus = Corpus::load(&cfg.data.root, cache.as_ref())?;
            let rows = run_ablation(p, &cfg, &corpus);
            write_ablation_csv(&dir.join(format!("ablation_{protocol}.csv")), &rows)?;
            write_json(&dir.join(format!("ablation_{protocol}.json")), &rows)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                log::warn!("{failed} of {} cells failed", rows.len());
            }
            Ok(())
        }
        Command::Export {
            checkpoint,
            split,
            corpus,
            per_class,
        } => {
            let ck = Checkpoint::load(checkpoint)?;
            let dir = out_dir(&cli, checkpoint)?;
            let frames = load_frames(&ck, corpus.as_deref(), split, cache.as_ref())?;
            let n = per_class.unwrap_or(ck.config.run.export_per_class);
            let seed = cli.seed.unwrap_or(ck.config.run.seed);
            let mut det = Detector::from_checkpoint(&ck)?;
            let e = export_embeddings(&mut det, &frames, n, seed)?;
            e.write_csv(&dir.join("embeddings.csv"))?;
            e.write_center(&dir.join("center.json"))?;
            info!("exported {} rows", e.rows.len());
            Ok(())
        }
        Command::Plot {
            kind,
            input,
            split,
            bins,
        } => {
            let dir = out_dir(&cli, Path::new("plots"))?;
            match kind {
                PlotKind::Roc => {
                    plot::plot_roc(&read_scores_csv(input)?, &dir)?;
                }
                PlotKind::Hist => {
                    let rows = read_distances(input)?;
                    plot::plot_distance_histogram(&rows, *bins, &dir)?;
                }
                PlotKind::Energy => {
                    let p = plot::EnergyProfile::from_manifest(&load_split(input, split)?)?;
                    plot::plot_band_energy(&p, &dir)?;
                }
                PlotKind::Sweep => {
                    let rows = read_ablation(input)?;
                    plot::plot_sweep(&plot::sweep_points(&rows)?, &dir)?;
                }
            }
            Ok(())
        }
    }
}

fn load_frames(ck: &Checkpoint, corpus: Option<&Path>, split: &str, cache: Option<&TensorCache>) -> Result<FrameSet> {
    let root = corpus.unwrap_or(&ck.config.data.root);
    let m = load_split(root, split)?;
    if ck.config.model.use_frequency && ck.stats.is_none() {
        return Err(Error::Config("checkpoint has no frequency statistics".into()));
    }
    FrameSet::load(&m, ck.stats.as_ref(), cache)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.is_file() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))
}

fn bad_row(path: &Path, what: &str) -> Error {
    Error::Config(format!("{}: bad {what}", path.display()))
}

/// `(label, distance_to_center)` from an embeddings export.
fn read_distances(path: &Path) -> Result<Vec<(u8, f64)>> {
    let mut r = open_csv(path)?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|_| bad_row(path, "row"))?;
            let label = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad_row(path, "label"))?;
            let d = rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad_row(path, "distance"))?;
            Ok((label, d))
        })
        .collect()
}

/// `(variant, auc, pauc_0_1)` from an ablation table.
fn read_ablation(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let mut r = open_csv(path)?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|_| bad_row(path, "row"))?;
            let num = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad_row(path, "number"));
            Ok((rec.get(0).unwrap_or_default().to_string(), num(1)?, num(2)?))
        })
        .collect()
}
