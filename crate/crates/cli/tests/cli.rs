use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn fdfl(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fdfl"));
    c.args(args).env("RUST_LOG", "warn").env_remove("FDFL_CACHE_DIR");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a tiny config rooted at `<dir>/corpus` and returns its path.
fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "data": {
            "root": dir.join("corpus"),
            "image_size": 32,
            "n_videos": 6,
            "val_videos": 4,
            "test_videos": 4,
            "frames_per_video": 2
        },
        "model": {
            "backbone": { "stem_channels": 4, "stage_channels": [6, 8, 8, 12] },
            "afimb": {
                "grouped_conv_out": 6,
                "mid_channels": 6,
                "attention_reduction": 3,
                "out_channels": 6
            },
            "embedding_dim": 8
        },
        "optim": { "lr": 0.001 },
        "run": {
            "batch_size": 6,
            "epochs": 1,
            "max_steps": 3,
            "eval_batch_size": 16,
            "ablation_seeds": 1
        }
    });
    let path = dir.join("tiny.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn synth(cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synth", "--config", s(cfg)];
    args.extend_from_slice(extra);
    let o = fdfl(&args, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn user_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let unknown = fdfl(&["train", "--config", s(&cfg), "--set", "run.nope=1"], &[]);
    assert_eq!(code(&unknown), 1);
    assert!(!unknown.stderr.is_empty());
    assert!(unknown.stdout.is_empty());

    assert_eq!(code(&fdfl(&["train", "--config", "/nonexistent/cfg.json"], &[])), 1);
    assert_eq!(code(&fdfl(&["frobnicate"], &[])), 1);
    assert_eq!(code(&fdfl(&["ablate", "--config", s(&cfg), "--protocol", "nope"], &[])), 1);
    assert_eq!(code(&fdfl(&["train", "--config", s(&cfg), "--set", "loss.variant=arcface"], &[])), 1);
    // corpus not generated yet
    assert_eq!(code(&fdfl(&["stats", "--config", s(&cfg), "--out", s(dir.path())], &[])), 1);
    assert_eq!(code(&fdfl(&["--help"], &[])), 0);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    synth(&cfg, &[]);
    let o = fdfl(
        &["train", "--config", s(&cfg), "--out", s(&dir.path().join("run")), "--set", "optim.lr=1e300"],
        &[],
    );
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn synth_is_seeded_and_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let hash = |out: &Path| read_json(&out.join("synth_summary.json"))["hash"].as_str().unwrap().to_string();
    let [a, b, c, z] = ["a", "b", "c", "z"].map(|n| dir.path().join(n));
    synth(&cfg, &["--out", s(&a), "--seed", "3"]);
    synth(&cfg, &["--out", s(&b), "--seed", "3"]);
    synth(&cfg, &["--out", s(&c), "--seed", "4"]);
    synth(&cfg, &["--out", s(&z), "--seed", "3", "--set", "data.amplitude=0"]);
    assert_eq!(hash(&a), hash(&b));
    assert_ne!(hash(&a), hash(&c));
    assert_ne!(hash(&a), hash(&z));
    // synth reports on stdout
    let o = synth(&cfg, &["--out", s(&a), "--seed", "3"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains(&hash(&b)));
}

#[test]
fn train_eval_export_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cache = dir.path().join("cache");
    synth(&cfg, &[]);

    let stats = fdfl(&["stats", "--config", s(&cfg), "--out", s(dir.path())], &[("FDFL_CACHE_DIR", &cache)]);
    assert_eq!(code(&stats), 0, "{}", String::from_utf8_lossy(&stats.stderr));
    assert!(dir.path().join("stats.json").is_file());
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);

    let run = dir.path().join("run");
    let o = fdfl(&["train", "--config", s(&cfg), "--out", s(&run)], &[("FDFL_CACHE_DIR", &cache)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.json", "history.jsonl", "summary.json", "test_scores.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let summary = read_json(&run.join("summary.json"));
    let test_auc = summary["test"]["video"]["auc"].as_f64().unwrap();

    let ck = run.join("checkpoint");
    let o = fdfl(&["eval", "--checkpoint", s(&ck), "--out", s(&run)], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed["video"]["auc"].as_f64().unwrap(), test_auc);
    assert_eq!(read_json(&run.join("metrics_test.json")), printed);

    let o = fdfl(&["export", "--checkpoint", s(&ck), "--out", s(&run), "--per-class", "3"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let emb = std::fs::read_to_string(run.join("embeddings.csv")).unwrap();
    assert_eq!(emb.lines().count(), 1 + 6);
    assert!(run.join("center.json").is_file());

    let plots = dir.path().join("plots");
    let cases: [(&str, PathBuf, &[&str]); 3] = [
        ("roc", run.join("scores_test.csv"), &["roc.png", "roc.csv"]),
        ("hist", run.join("embeddings.csv"), &["distance_hist.png", "distance_hist.csv", "separation.json"]),
        ("energy", dir.path().join("corpus"), &["band_energy.png", "band_energy.csv"]),
    ];
    for (kind, input, files) in cases {
        let o = fdfl(&["plot", "--kind", kind, "--input", s(&input), "--out", s(&plots)], &[]);
        assert_eq!(code(&o), 0, "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            assert!(plots.join(f).is_file(), "{f}");
        }
    }
    let o = fdfl(&["plot", "--kind", "roc", "--input", s(&dir.path().join("missing.csv"))], &[]);
    assert_eq!(code(&o), 1);
}

#[test]
fn ablate_components_writes_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    synth(&cfg, &[]);
    let out = dir.path().join("abl");
    let o = fdfl(&["ablate", "--config", s(&cfg), "--protocol", "components", "--out", s(&out)], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("ablation_components.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["variant", "auc", "pauc_0_1", "error"]);
    let variants: Vec<String> = r.records().map(|rec| rec.unwrap()[0].to_string()).collect();
    assert_eq!(variants.len(), 4);
    assert_eq!(variants[0], "baseline");
}
