//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test -p fdfl-repro --test acceptance -- 3 5` runs a subset.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fdfl_core::data::synth_generate;
use fdfl_core::freq::{block_dct2d, block_idct2d, regroup, ungroup, Plane, BANDS, BLOCK, CHANNELS};
use fdfl_core::loss::{scl_backward, scl_forward, CenterPoint, EmbeddingBatch, SclConfig};
use fdfl_core::metrics::{pauc, roc_auc};
use fdfl_core::plot::separation;
use fdfl_core::train::{
    export_embeddings, train, AblationProtocol, Checkpoint, ComponentsProtocol, Corpus, Detector,
    ExperimentConfig,
};

type Check = Result<(bool, String), String>;

fn main() -> ExitCode {
    let wanted: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |id: u8| wanted.is_empty() || wanted.contains(&id);
    let mut desk = Desk::default();
    let mut failed = 0;
    let criteria: [(u8, &str); 10] = [
        (1, "SCL gradients vs finite differences"),
        (2, "SCL closed-form cases"),
        (3, "block DCT vs naive DCT-II"),
        (4, "regroup bijection and plane separation"),
        (5, "metric oracles"),
        (6, "component ablation ordering"),
        (7, "softmax+SCL vs softmax, embedding geometry"),
        (8, "null-signal control"),
        (9, "determinism and checkpoint reload"),
        (10, "lambda=0 reduces to softmax"),
    ];
    for (id, name) in criteria {
        if !run(id) {
            continue;
        }
        let t = Instant::now();
        let r = match id {
            1 => scl_gradcheck(),
            2 => scl_closed_forms(),
            3 => dct_oracle(),
            4 => regroup_bijection(),
            5 => metric_oracles(),
            6 => desk.component_ordering(),
            7 => desk.scl_vs_softmax(),
            8 => null_control(),
            9 => desk.determinism(),
            _ => desk.lambda_zero(),
        };
        let (pass, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failed += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} [{:.1}s] {name}: {detail}",
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- 1, 2

fn scl_gradcheck() -> Check {
    let (b, d, h) = (8usize, 16usize, 1e-6);
    let cfg = SclConfig::default();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut checked, mut excluded, mut hinge_on) = (0.0f64, 0, 0, 0);
    for _ in 0..100 {
        let mut labels: Vec<u8> = (0..b).map(|i| u8::from(i % 2 == 1 || rng.gen_bool(0.3))).collect();
        labels.shuffle(&mut rng);
        labels[0] = 0;
        labels[1] = 1;
        let c: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        // class spreads vary so both hinge regimes occur
        let spread = [rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0)];
        let emb: Vec<f64> = labels
            .iter()
            .flat_map(|&y| (0..d).map(|k| c[k] + spread[y as usize] * normal(&mut rng)).collect::<Vec<_>>())
            .collect();
        let loss = |emb: &[f64], c: &[f64]| {
            let batch = EmbeddingBatch::new(d, emb.to_vec(), labels.clone()).unwrap();
            scl_forward(&batch, &CenterPoint::new(c.to_vec()), &cfg).unwrap()
        };
        let fwd = loss(&emb, &c);
        if fwd.hinge_arg.abs() < 1e-3 || fwd.distances.iter().any(|&x| x < 1e-6) {
            excluded += 1;
            continue;
        }
        hinge_on += usize::from(fwd.hinge_arg > 0.0);
        let batch = EmbeddingBatch::new(d, emb.clone(), labels.clone()).map_err(|e| e.to_string())?;
        let g = scl_backward(&batch, &CenterPoint::new(c.clone()), &cfg, &fwd).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = g.embeddings.iter().chain(&g.center).copied().collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..emb.len() + d {
            let (mut ep, mut em, mut cp, mut cm) = (emb.clone(), emb.clone(), c.clone(), c.clone());
            if i < emb.len() {
                ep[i] += h;
                em[i] -= h;
            } else {
                cp[i - emb.len()] += h;
                cm[i - emb.len()] -= h;
            }
            numeric.push((loss(&ep, &cp).loss - loss(&em, &cm).loss) / (2.0 * h));
        }
        let diff = norm(analytic.iter().zip(&numeric).map(|(a, n)| a - n));
        let scale = norm(analytic.iter().copied()).max(norm(numeric.iter().copied()));
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
        checked += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        worst < 1e-5 && secs < 10.0 && checked > 0,
        format!(
            "max rel err {worst:.2e} (< 1e-5) over {checked} batches ({hinge_on} with hinge on, {excluded} excluded), {secs:.2}s (< 10s)"
        ),
    ))
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn scl_closed_forms() -> Check {
    let cfg = SclConfig {
        m: 0.5,
        ..SclConfig::default()
    };
    let c = CenterPoint::new(vec![0.5, -1.0, 2.0, 0.25]);
    let at = |offset: [f64; 4]| -> Vec<f64> { c.c.iter().zip(offset).map(|(a, o)| a + o).collect() };
    let run = |rows: Vec<Vec<f64>>, labels: Vec<u8>| {
        let b = EmbeddingBatch::new(4, rows.concat(), labels).unwrap();
        let f = scl_forward(&b, &c, &cfg).unwrap();
        let g = scl_backward(&b, &c, &cfg, &f).unwrap();
        (f, g)
    };
    // two naturals at C, one manipulated at distance 2
    let (f1, g1) = run(vec![at([0.0; 4]), at([0.0; 4]), at([0.0, 2.0, 0.0, 0.0])], vec![0, 0, 1]);
    let satisfied = f1.m_nat.abs() <= 1e-12
        && (f1.m_man - 2.0).abs() <= 1e-12
        && f1.loss.abs() <= 1e-12
        && g1.embeddings[8..].iter().all(|&v| v == 0.0);
    // both classes at distance 3
    let (f2, _) = run(vec![at([3.0, 0.0, 0.0, 0.0]), at([0.0, 0.0, -1.8, 2.4])], vec![0, 1]);
    let equal = (f2.loss - 4.0).abs() <= 1e-12;
    Ok((
        satisfied && equal,
        format!(
            "satisfied margin L={:.1e} M_man={} (0, 2); equal distance L={} (4); tol 1e-12",
            f1.loss, f1.m_man, f2.loss
        ),
    ))
}

// ---------------------------------------------------------------- 3, 4

fn naive_dct(block: &[f64]) -> [f64; 64] {
    let alpha = |k: usize| if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                for y in 0..8 {
                    s += block[x * 8 + y]
                        * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos()
                        * ((2 * y + 1) as f64 * v as f64 * std::f64::consts::PI / 16.0).cos();
                }
            }
            out[u * 8 + v] = alpha(u) * alpha(v) * s;
        }
    }
    out
}

/// Block `k` of a one-block-high plane.
fn block_of(p: &Plane, k: usize) -> Vec<f64> {
    (0..BLOCK * BLOCK).map(|i| p.at(i / BLOCK, k * BLOCK + i % BLOCK)).collect()
}

fn dct_oracle() -> Check {
    let t = Instant::now();
    let n = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f64> = (0..n * 64).map(|_| rng.gen_range(-128.0..128.0)).collect();
    let plane = Plane::new(BLOCK, n * BLOCK, data).map_err(|e| e.to_string())?;
    let coeffs = block_dct2d(&plane).map_err(|e| e.to_string())?;
    let back = block_idct2d(&coeffs).map_err(|e| e.to_string())?;
    let (mut oracle_err, mut energy_err, mut trip_err) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..n {
        let x = block_of(&plane, k);
        let got = block_of(&coeffs, k);
        let want = naive_dct(&x);
        for (a, b) in got.iter().zip(want) {
            oracle_err = oracle_err.max((a - b).abs());
        }
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = got.iter().map(|v| v * v).sum();
        energy_err = energy_err.max((ex - ec).abs() / ex);
        for (a, b) in block_of(&back, k).iter().zip(&x) {
            trip_err = trip_err.max((a - b).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        oracle_err <= 1e-8 && energy_err <= 1e-6 && trip_err <= 1e-6 && secs < 30.0,
        format!(
            "{n} blocks: oracle {oracle_err:.1e} (1e-8), energy {energy_err:.1e} rel (1e-6), round trip {trip_err:.1e} (1e-6), {secs:.2}s (< 30s)"
        ),
    ))
}

fn random_plane(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Plane {
    Plane::new(h, w, (0..h * w).map(|_| rng.gen_range(-255.0..255.0)).collect()).unwrap()
}

fn regroup_bijection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (h, w) = (32, 48);
    let (mut exact, mut separated) = (true, true);
    for _ in 0..20 {
        let planes = [0, 1, 2].map(|_| random_plane(&mut rng, h, w));
        let t = regroup(&planes).map_err(|e| e.to_string())?;
        exact &= ungroup(&t) == planes;

        let dct = |ps: &[Plane; 3]| -> Result<_, String> {
            let c = [0, 1, 2].map(|i| block_dct2d(&ps[i]).unwrap());
            regroup(&c).map_err(|e| e.to_string())
        };
        let base = dct(&planes)?;
        for p in 0..3 {
            let mut moved = planes.clone();
            let noise = random_plane(&mut rng, h, w);
            for (v, n) in moved[p].data.iter_mut().zip(&noise.data) {
                *v += n;
            }
            let out = dct(&moved)?;
            for c in 0..CHANNELS {
                let changed = base.channel(c).zip(out.channel(c)).any(|(a, b)| a != b);
                let own = c / BANDS == p;
                separated &= changed == own;
            }
        }
    }
    Ok((
        exact && separated,
        format!("ungroup(regroup(x)) == x: {exact}; each plane moves exactly its 64 channels: {separated} (20 trials)"),
    ))
}

// ---------------------------------------------------------------- 5

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = rng.gen_range(2..80);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    // coarse scores produce ties
    let levels = if rng.gen_bool(0.5) { 5 } else { 1_000_000 };
    let scores = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// ROC by enumerating every threshold (predict manipulated when
/// `score >= t`), then the trapezoid area up to `max_fpr`, over `max_fpr`.
fn enumerated_pauc(scores: &[f64], labels: &[u8], max_fpr: f64) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let hit = |label: u8| scores.iter().zip(labels).filter(|(s, &y)| y == label && **s >= t).count() as f64;
            (hit(0) / neg, hit(1) / pos)
        })
        .collect();
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= max_fpr {
            break;
        }
        let x_end = x1.min(max_fpr);
        let y_end = if x1 > x0 { y0 + (y1 - y0) * (x_end - x0) / (x1 - x0) } else { y1 };
        area += (x_end - x0) * (y0 + y_end) / 2.0;
    }
    area / max_fpr
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut auc_exact, mut full_err, mut pauc_err) = (true, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (s, y) = random_instance(&mut rng);
        let auc = roc_auc(&s, &y).map_err(|e| e.to_string())?;
        auc_exact &= auc == brute_auc(&s, &y);
        full_err = full_err.max((pauc(&s, &y, 1.0).map_err(|e| e.to_string())? - auc).abs());
    }
    for _ in 0..200 {
        let (s, y) = random_instance(&mut rng);
        let max_fpr = if rng.gen_bool(0.2) { 0.1 } else { rng.gen_range(0.01..=1.0) };
        let got = pauc(&s, &y, max_fpr).map_err(|e| e.to_string())?;
        pauc_err = pauc_err.max((got - enumerated_pauc(&s, &y, max_fpr)).abs());
    }
    Ok((
        auc_exact && full_err <= 1e-12 && pauc_err <= 1e-12,
        format!(
            "AUC == brute force on 200: {auc_exact}; |pauc(1) - auc| {full_err:.1e} (1e-12); pauc vs threshold enumeration {pauc_err:.1e} (1e-12)"
        ),
    ))
}

// ---------------------------------------------------------------- 6, 7, 9, 10

fn desk_config() -> Result<ExperimentConfig, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    ExperimentConfig::load(Some(&path), &[]).map_err(|e| e.to_string())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(" "))
}

struct CellRuns {
    variant: String,
    test_auc: Vec<f64>,
    final_val_auc: Vec<f64>,
    /// (mean natural, mean manipulated) distance on val, per seed.
    geometry: Vec<(f64, f64)>,
}

#[derive(Default)]
struct Desk {
    dir: Option<tempfile::TempDir>,
    corpus: Option<Corpus>,
    cells: Option<Vec<CellRuns>>,
    secs: f64,
}

impl Desk {
    fn corpus(&mut self) -> Result<(&Corpus, PathBuf), String> {
        if self.corpus.is_none() {
            let t = Instant::now();
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let mut cfg = desk_config()?;
            cfg.data.root = dir.path().to_path_buf();
            synth_generate(&cfg.data.synthetic(), dir.path()).map_err(|e| e.to_string())?;
            self.corpus = Some(Corpus::load(dir.path(), None).map_err(|e| e.to_string())?);
            self.dir = Some(dir);
            self.secs += t.elapsed().as_secs_f64();
        }
        let root = self.dir.as_ref().unwrap().path().to_path_buf();
        Ok((self.corpus.as_ref().unwrap(), root))
    }

    fn base(&mut self) -> Result<ExperimentConfig, String> {
        let (_, root) = self.corpus()?;
        let mut cfg = desk_config()?;
        cfg.data.root = root;
        Ok(cfg)
    }

    /// Every component cell over the configured seeds. Shared by 6 and 7.
    fn runs(&mut self) -> Result<&[CellRuns], String> {
        if self.cells.is_none() {
            let base = self.base()?;
            let t = Instant::now();
            let corpus = self.corpus.as_ref().unwrap();
            let mut cells = Vec::new();
            for cell in ComponentsProtocol.cells(&base) {
                let mut runs = CellRuns {
                    variant: cell.variant.clone(),
                    test_auc: Vec::new(),
                    final_val_auc: Vec::new(),
                    geometry: Vec::new(),
                };
                for k in 0..base.run.ablation_seeds as u64 {
                    let mut cfg = cell.config.clone();
                    cfg.run.seed = base.run.seed + k;
                    let out = train(&cfg, corpus).map_err(|e| format!("{} seed {k}: {e}", cell.variant))?;
                    let test = corpus.test.as_ref().ok_or("desk corpus has no test split")?;
                    let r = Detector::from_checkpoint(&out.best).and_then(|mut d| d.evaluate(test));
                    runs.test_auc.push(r.map_err(|e| e.to_string())?.video.auc);
                    let mut last = Detector::from_checkpoint(&out.last).map_err(|e| e.to_string())?;
                    runs.final_val_auc.push(last.evaluate(&corpus.val).map_err(|e| e.to_string())?.video.auc);
                    let e = export_embeddings(&mut last, &corpus.val, usize::MAX, cfg.run.seed).map_err(|e| e.to_string())?;
                    let rows: Vec<(u8, f64)> = e.rows.iter().map(|r| (r.label, r.distance_to_center)).collect();
                    let s = separation(&rows).map_err(|e| e.to_string())?;
                    runs.geometry.push((s.mean_natural, s.mean_manipulated));
                }
                cells.push(runs);
            }
            self.secs += t.elapsed().as_secs_f64();
            self.cells = Some(cells);
        }
        Ok(self.cells.as_ref().unwrap())
    }

    fn cell(&mut self, name: &str) -> Result<&CellRuns, String> {
        self.runs()?
            .iter()
            .find(|c| c.variant == name)
            .ok_or_else(|| format!("no cell {name}"))
    }

    fn component_ordering(&mut self) -> Check {
        self.runs()?;
        let auc = |d: &mut Self, n: &str| d.cell(n).map(|c| mean(&c.test_auc));
        let (base, scl, freq, both) = (auc(self, "baseline")?, auc(self, "+SCL")?, auc(self, "+AFFGM")?, auc(self, "+both")?);
        let conds = [
            base < freq,
            base < scl,
            both >= freq.max(scl) - 0.01,
            freq >= base + 0.10,
            self.secs <= 1800.0,
        ];
        let seeds: Vec<String> = self
            .runs()?
            .iter()
            .map(|c| format!("{} {}", c.variant, fmt(&c.test_auc)))
            .collect();
        Ok((
            conds.iter().all(|&c| c),
            format!(
                "mean test video AUC baseline {base:.3}, +SCL {scl:.3}, +AFFGM {freq:.3}, +both {both:.3}; \
                 base<+AFFGM {}, base<+SCL {}, +both>=max-0.01 {}, +AFFGM>=base+0.10 {}; {:.0}s (<= 1800s); per seed: {}",
                conds[0], conds[1], conds[2], conds[3], self.secs, seeds.join(", ")
            ),
        ))
    }

    fn scl_vs_softmax(&mut self) -> Check {
        let soft = self.cell("baseline")?.final_val_auc.clone();
        let secs = self.secs;
        let scl = self.cell("+SCL")?;
        let (a, b) = (mean(&scl.final_val_auc), mean(&soft));
        let cfg = desk_config()?;
        let margin = cfg.loss.scl.margin(cfg.model.embedding_dim);
        let geometry_ok = scl.geometry.iter().all(|&(n, m)| n < m && m - n > 0.5 * margin);
        let gaps: Vec<f64> = scl.geometry.iter().map(|(n, m)| m - n).collect();
        Ok((
            a >= b + 0.02 && geometry_ok && secs <= 1800.0,
            format!(
                "final val video AUC softmax+SCL {a:.3} {} vs softmax {b:.3} {} (need +0.02); \
                 distance gap manipulated-natural {} (need > {:.3} = 0.5 m sqrt(D))",
                fmt(&scl.final_val_auc),
                fmt(&soft),
                fmt(&gaps),
                0.5 * margin
            ),
        ))
    }

    fn determinism(&mut self) -> Check {
        let mut cfg = self.base()?;
        cfg.loss.variant = "softmax+scl".into();
        cfg.model.use_frequency = true;
        cfg.model.mixed_precision = false;
        cfg.run.max_steps = 200;
        let corpus = self.corpus.as_ref().unwrap();
        let a = train(&cfg, corpus).map_err(|e| e.to_string())?;
        let b = train(&cfg, corpus).map_err(|e| e.to_string())?;
        let diff = (a.final_loss - b.final_loss).abs();

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        a.best.save(dir.path()).map_err(|e| e.to_string())?;
        let loaded = Checkpoint::load(dir.path()).map_err(|e| e.to_string())?;
        let score = |ck: &Checkpoint| Detector::from_checkpoint(ck).and_then(|mut d| d.score(&corpus.val));
        let s1 = score(&a.best).map_err(|e| e.to_string())?;
        let s2 = score(&loaded).map_err(|e| e.to_string())?;
        let same = s1 == s2;
        Ok((
            diff <= 1e-6 && a.history.len() == 200 && same,
            format!(
                "200-step +both runs: final loss {:.9} vs {:.9}, |diff| {diff:.1e} (1e-6); reloaded checkpoint scores identical on {} val frames: {same}",
                a.final_loss,
                b.final_loss,
                s1.len()
            ),
        ))
    }

    fn lambda_zero(&mut self) -> Check {
        let mut cfg = self.base()?;
        cfg.model.use_frequency = true;
        cfg.run.max_steps = 100;
        cfg.loss.variant = "softmax".into();
        let corpus = self.corpus.as_ref().unwrap();
        let plain = train(&cfg, corpus).map_err(|e| e.to_string())?;
        cfg.loss.variant = "softmax+scl".into();
        cfg.loss.scl.lambda = 0.0;
        let scl = train(&cfg, corpus).map_err(|e| e.to_string())?;
        let a: Vec<f64> = plain.history.iter().map(|r| r.loss).collect();
        let b: Vec<f64> = scl.history.iter().map(|r| r.loss).collect();
        let first_diff = a.iter().zip(&b).position(|(x, y)| x != y);
        Ok((
            a == b && a.len() == 100,
            format!(
                "{} vs {} steps, first differing step: {}",
                a.len(),
                b.len(),
                first_diff.map_or("none".into(), |s| (s + 1).to_string())
            ),
        ))
    }
}

// ---------------------------------------------------------------- 8

fn null_control() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut base = desk_config()?;
    base.data.root = dir.path().to_path_buf();
    base.data.amplitude = 0.0;
    base.data.test_videos = 512;
    synth_generate(&base.data.synthetic(), dir.path()).map_err(|e| e.to_string())?;
    let corpus = Corpus::load(dir.path(), None).map_err(|e| e.to_string())?;
    let test = corpus.test.as_ref().ok_or("no test split")?;

    let mut cells: Vec<(String, ExperimentConfig)> = ComponentsProtocol
        .cells(&base)
        .into_iter()
        .map(|c| (c.variant, c.config))
        .collect();
    for loss in ["softmax+center", "softmax+triplet"] {
        let mut c = base.clone();
        c.loss.variant = loss.into();
        c.model.use_frequency = false;
        cells.push((loss.into(), c));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, cfg) in cells {
        let out = train(&cfg, &corpus).map_err(|e| format!("{name}: {e}"))?;
        let auc = Detector::from_checkpoint(&out.best)
            .and_then(|mut d| d.evaluate(test))
            .map_err(|e| e.to_string())?
            .video
            .auc;
        ok &= (0.45..=0.55).contains(&auc);
        parts.push(format!("{name} {auc:.3}"));
    }
    Ok((
        ok,
        format!("amplitude 0, {} test videos per class, test video AUC in [0.45, 0.55]: {}", 512, parts.join(", ")),
    ))
}
