//! Raster figures, each written next to the CSV holding its numbers.
//! Figures carry no text; read values from the CSV.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::Serialize;

use crate::data::{load_image, CorpusManifest, LABEL_FAKE, LABEL_REAL};
use crate::error::{Error, Result};
use crate::freq::{band_energy, preprocess_image, BLOCK};
use crate::metrics::{roc_curve, video_aggregate, ScoredFrame, PAUC_MAX_FPR};

const W: u32 = 480;
const H: u32 = 360;
const PAD: u32 = 30;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GREY: Rgb<u8> = Rgb([200, 200, 200]);
const BLUE: Rgb<u8> = Rgb([31, 119, 180]);
const ORANGE: Rgb<u8> = Rgb([255, 127, 14]);
const SHADE: Rgb<u8> = Rgb([190, 215, 240]);

/// Plot area mapping data coordinates in `[x0,x1]×[y0,y1]` to pixels.
struct Canvas {
    img: RgbImage,
    x: (f64, f64),
    y: (f64, f64),
}

impl Canvas {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let mut c = Self {
            img: RgbImage::from_pixel(W, H, WHITE),
            x,
            y,
        };
        c.line((x.0, y.0), (x.1, y.0), BLACK);
        c.line((x.0, y.0), (x.0, y.1), BLACK);
        c
    }

    fn px(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let sx = (x - self.x.0) / (self.x.1 - self.x.0).max(1e-300);
        let sy = (y - self.y.0) / (self.y.1 - self.y.0).max(1e-300);
        (
            PAD as f64 + sx * (W - 2 * PAD) as f64,
            (H - PAD) as f64 - sy * (H - 2 * PAD) as f64,
        )
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if (0..W as i64).contains(&x) && (0..H as i64).contains(&y) {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
        let (ax, ay) = self.px(a);
        let (bx, by) = self.px(b);
        let n = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            self.put((ax + t * (bx - ax)).round() as i64, (ay + t * (by - ay)).round() as i64, c);
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], c: Rgb<u8>) {
        for w in pts.windows(2) {
            self.line(w[0], w[1], c);
        }
    }

    /// Fills the data-space rectangle between two corners.
    fn rect(&mut self, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
        let (ax, ay) = self.px(a);
        let (bx, by) = self.px(b);
        let (x0, x1) = (ax.min(bx).round() as i64, ax.max(bx).round() as i64);
        let (y0, y1) = (ay.min(by).round() as i64, ay.max(by).round() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.put(x, y, c);
            }
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        self.img.save(path)?;
        Ok(())
    }
}

fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let err = |e: csv::Error| crate::metrics::csv_err(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Video-level ROC with the low-false-alarm region shaded; writes
/// `roc.png` and `roc.csv` into `dir`.
pub fn plot_roc(frames: &[ScoredFrame], dir: &Path) -> Result<Vec<RocPoint>> {
    let videos = video_aggregate(frames)?;
    let s: Vec<f64> = videos.iter().map(|v| v.score).collect();
    let l: Vec<u8> = videos.iter().map(|v| v.label).collect();
    let pts = roc_curve(&s, &l)?;
    let mut c = Canvas::new((0.0, 1.0), (0.0, 1.0));
    for w in pts.windows(2) {
        let (x0, x1) = (w[0].0.min(PAUC_MAX_FPR), w[1].0.min(PAUC_MAX_FPR));
        if x1 > x0 {
            // area under a segment, drawn as thin columns
            let steps = (((x1 - x0) * (W - 2 * PAD) as f64).ceil() as usize).max(1);
            for i in 0..steps {
                let xa = x0 + (x1 - x0) * i as f64 / steps as f64;
                let xb = x0 + (x1 - x0) * (i + 1) as f64 / steps as f64;
                let t = ((xa + xb) / 2.0 - w[0].0) / (w[1].0 - w[0].0);
                let y = w[0].1 + t * (w[1].1 - w[0].1);
                c.rect((xa, 0.0), (xb, y), SHADE);
            }
        }
    }
    c.line((0.0, 0.0), (1.0, 1.0), GREY);
    c.line((PAUC_MAX_FPR, 0.0), (PAUC_MAX_FPR, 1.0), GREY);
    c.polyline(&pts, BLUE);
    c.save(&dir.join("roc.png"))?;
    let rows: Vec<RocPoint> = pts.iter().map(|&(fpr, tpr)| RocPoint { fpr, tpr }).collect();
    write_rows(&dir.join("roc.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub natural: usize,
    pub manipulated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Separation {
    pub mean_natural: f64,
    pub mean_manipulated: f64,
    pub gap: f64,
    /// Fraction of (natural, manipulated) pairs where the natural sample is
    /// closer to the center.
    pub ordered_fraction: f64,
}

pub fn separation(rows: &[(u8, f64)]) -> Result<Separation> {
    let nat: Vec<f64> = rows.iter().filter(|r| r.0 == LABEL_REAL).map(|r| r.1).collect();
    let man: Vec<f64> = rows.iter().filter(|r| r.0 == LABEL_FAKE).map(|r| r.1).collect();
    if nat.is_empty() || man.is_empty() {
        return Err(Error::SingleClass("distance histogram needs both classes".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ordered = nat
        .iter()
        .map(|a| man.iter().map(|b| if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 }).sum::<f64>())
        .sum::<f64>()
        / (nat.len() * man.len()) as f64;
    let (mn, mm) = (mean(&nat), mean(&man));
    Ok(Separation {
        mean_natural: mn,
        mean_manipulated: mm,
        gap: mm - mn,
        ordered_fraction: ordered,
    })
}

/// Distance-to-center histograms by class from `(label, distance)` rows;
/// writes `distance_hist.png`, `distance_hist.csv` and `separation.json`.
pub fn plot_distance_histogram(rows: &[(u8, f64)], bins: usize, dir: &Path) -> Result<(Vec<HistogramBin>, Separation)> {
    let sep = separation(rows)?;
    let bins = bins.max(1);
    let lo = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut hist: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            natural: 0,
            manipulated: 0,
        })
        .collect();
    for &(label, d) in rows {
        let b = (((d - lo) / width) as usize).min(bins - 1);
        if label == LABEL_REAL {
            hist[b].natural += 1;
        } else {
            hist[b].manipulated += 1;
        }
    }
    let top = hist.iter().map(|b| b.natural.max(b.manipulated)).max().unwrap_or(1).max(1) as f64;
    let mut c = Canvas::new((lo, lo + bins as f64 * width), (0.0, top));
    for b in &hist {
        let mid = (b.lo + b.hi) / 2.0;
        c.rect((b.lo, 0.0), (mid, b.natural as f64), BLUE);
        c.rect((mid, 0.0), (b.hi, b.manipulated as f64), ORANGE);
    }
    c.save(&dir.join("distance_hist.png"))?;
    write_rows(&dir.join("distance_hist.csv"), &hist)?;
    let p = dir.join("separation.json");
    std::fs::write(&p, serde_json::to_vec_pretty(&sep)?).map_err(|e| Error::io(&p, e))?;
    Ok((hist, sep))
}

/// Mean per-band DCT energy by class and plane, `[class][plane][u][v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub energy: [[[[f64; BLOCK]; BLOCK]; 3]; 2],
    pub frames: [usize; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyRow {
    pub plane: usize,
    pub u: usize,
    pub v: usize,
    pub natural: f64,
    pub manipulated: f64,
    pub difference: f64,
}

impl EnergyProfile {
    pub fn from_manifest(m: &CorpusManifest) -> Result<Self> {
        let mut p = Self {
            energy: [[[[0.0; BLOCK]; BLOCK]; 3]; 2],
            frames: [0, 0],
        };
        for r in &m.records {
            let (img, _) = load_image(&r.path)?;
            let t = preprocess_image(&img, None)?;
            let k = r.label as usize;
            for plane in 0..3 {
                let e = band_energy(&t, plane);
                for u in 0..BLOCK {
                    for v in 0..BLOCK {
                        p.energy[k][plane][u][v] += e[u][v];
                    }
                }
            }
            p.frames[k] += 1;
        }
        for k in 0..2 {
            let n = p.frames[k].max(1) as f64;
            p.energy[k].iter_mut().flatten().flatten().for_each(|e| *e /= n);
        }
        Ok(p)
    }

    /// Manipulated minus natural energy.
    pub fn difference(&self, plane: usize) -> [[f64; BLOCK]; BLOCK] {
        let mut d = [[0.0; BLOCK]; BLOCK];
        for u in 0..BLOCK {
            for v in 0..BLOCK {
                d[u][v] = self.energy[1][plane][u][v] - self.energy[0][plane][u][v];
            }
        }
        d
    }

    pub fn rows(&self) -> Vec<EnergyRow> {
        let mut out = Vec::with_capacity(3 * BLOCK * BLOCK);
        for plane in 0..3 {
            for u in 0..BLOCK {
                for v in 0..BLOCK {
                    let (n, m) = (self.energy[0][plane][u][v], self.energy[1][plane][u][v]);
                    out.push(EnergyRow {
                        plane,
                        u,
                        v,
                        natural: n,
                        manipulated: m,
                        difference: m - n,
                    });
                }
            }
        }
        out
    }
}

fn colormap(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 4] = [[68., 1., 84.], [59., 82., 139.], [33., 145., 140.], [253., 231., 37.]];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Log-energy heatmaps of the luma plane (natural, manipulated) and their
/// difference, side by side; writes `band_energy.png` and `band_energy.csv`.
pub fn plot_band_energy(p: &EnergyProfile, dir: &Path) -> Result<Vec<EnergyRow>> {
    let cell = 16u32;
    let side = cell * BLOCK as u32;
    let mut img = RgbImage::from_pixel(3 * side + 4 * 8, side + 16, WHITE);
    let log = |e: f64| (e + 1e-12).log10();
    let maps = [p.energy[0][0], p.energy[1][0]];
    let lo = maps.iter().flatten().flatten().map(|&e| log(e)).fold(f64::INFINITY, f64::min);
    let hi = maps.iter().flatten().flatten().map(|&e| log(e)).fold(f64::NEG_INFINITY, f64::max);
    let diff = p.difference(0);
    let dmax = diff.iter().flatten().map(|d| d.abs()).fold(0.0, f64::max).max(1e-300);
    for (k, x0) in [8u32, side + 16, 2 * side + 24].into_iter().enumerate() {
        for u in 0..BLOCK {
            for v in 0..BLOCK {
                let t = match k {
                    0 | 1 => (log(maps[k][u][v]) - lo) / (hi - lo).max(1e-12),
                    _ => 0.5 + 0.5 * diff[u][v] / dmax,
                };
                let color = colormap(t);
                for dy in 0..cell {
                    for dx in 0..cell {
                        img.put_pixel(x0 + v as u32 * cell + dx, 8 + u as u32 * cell + dy, color);
                    }
                }
            }
        }
    }
    img.save(dir.join("band_energy.png"))?;
    let rows = p.rows();
    write_rows(&dir.join("band_energy.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub auc: f64,
    pub pauc_0_1: f64,
}

/// Parses `name=value` variants of an ablation table into sorted points.
pub fn sweep_points(rows: &[(String, f64, f64)]) -> Result<Vec<SweepPoint>> {
    let mut pts = rows
        .iter()
        .map(|(variant, auc, pauc)| {
            let value = variant
                .split_once('=')
                .and_then(|(_, v)| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("`{variant}` is not a sweep variant (expected name=value)")))?;
            Ok(SweepPoint {
                value,
                auc: *auc,
                pauc_0_1: *pauc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pts.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(pts)
}

/// AUC (blue) and pAUC (orange) against the swept value; writes
/// `sweep.png` and `sweep.csv`.
pub fn plot_sweep(points: &[SweepPoint], dir: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty("sweep has no points".into()));
    }
    let x0 = points.first().map(|p| p.value).unwrap_or(0.0);
    let x1 = points.last().map(|p| p.value).unwrap_or(1.0).max(x0 + 1e-9);
    let mut c = Canvas::new((x0, x1), (0.0, 1.0));
    let fin = |v: f64| if v.is_finite() { v } else { 0.0 };
    let auc: Vec<(f64, f64)> = points.iter().map(|p| (p.value, fin(p.auc))).collect();
    let pauc: Vec<(f64, f64)> = points.iter().map(|p| (p.value, fin(p.pauc_0_1))).collect();
    c.polyline(&auc, BLUE);
    c.polyline(&pauc, ORANGE);
    for &(x, y) in auc.iter().chain(&pauc) {
        c.rect((x, y), (x, y), BLACK);
    }
    c.save(&dir.join("sweep.png"))?;
    write_rows(&dir.join("sweep.csv"), points)
}
