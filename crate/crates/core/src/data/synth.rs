//! Synthetic corpus whose forgery signal lives in chosen DCT bands.
//!
//! Real frames are smooth random fields (drifting low-frequency cosines plus
//! a linear gradient and per-channel tints) with broadband sensor noise.
//! Fake frames come from the same generator and then get, in every 8×8
//! block, a random-sign multiple of each perturbed band's basis pattern
//! added equally to R, G and B. Equal RGB offsets leave Cb/Cr untouched, so
//! the injected energy shows up in the luma bands only.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::{class_dir, build_manifest, CorpusManifest, FrameSampling, LABEL_FAKE};
use crate::error::{Error, Result};
use crate::freq::{basis_pattern, ImageRgb, BLOCK};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub image_size: usize,
    /// Videos per class in the train split.
    pub n_videos: usize,
    pub val_videos: usize,
    pub test_videos: usize,
    pub frames_per_video: usize,
    /// `(u, v)` bands perturbed in fake frames; each needs `u + v >= 4`.
    pub perturbed_bands: Vec<[usize; 2]>,
    /// Magnitude of each injected coefficient in orthonormal DCT units.
    pub amplitude: f64,
    /// Std of the per-pixel Gaussian noise, in 8-bit levels.
    pub noise_sigma: f64,
    /// Largest cosine amplitude of the smooth base field, in 8-bit levels.
    pub texture_amplitude: f64,
    /// Re-encode frames as JPEG at this quality (1..=100); 0 keeps PNG.
    pub jpeg_quality: u8,
    /// Build fake video `v` on the same base field and noise as real video
    /// `v`, so the classes differ only by the perturbation.
    pub paired: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            n_videos: 32,
            val_videos: 16,
            test_videos: 16,
            frames_per_video: 4,
            perturbed_bands: vec![[1, 4], [4, 1], [3, 3]],
            // 3% of the 0..2040 luma DC range.
            amplitude: 0.03 * 2040.0,
            noise_sigma: 4.0,
            texture_amplitude: 30.0,
            jpeg_quality: 0,
            paired: false,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.image_size % BLOCK != 0 {
            return Err(Error::Config(format!(
                "image_size {} must be a positive multiple of {BLOCK}",
                self.image_size
            )));
        }
        for &[u, v] in &self.perturbed_bands {
            if u >= BLOCK || v >= BLOCK || u + v < 4 {
                return Err(Error::Config(format!(
                    "perturbed band ({u}, {v}) must lie in 0..8 with u + v >= 4"
                )));
            }
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config(format!("amplitude {} must be >= 0", self.amplitude)));
        }
        if !(self.noise_sigma >= 0.0 && self.texture_amplitude >= 0.0) {
            return Err(Error::Config("noise and texture scales must be >= 0".into()));
        }
        if self.n_videos == 0 || self.frames_per_video == 0 {
            return Err(Error::Config("n_videos and frames_per_video must be >= 1".into()));
        }
        if self.jpeg_quality > 100 {
            return Err(Error::Config("jpeg_quality must be in 0..=100".into()));
        }
        Ok(())
    }

    pub fn videos_in(&self, split: &str) -> usize {
        match split {
            "train" => self.n_videos,
            "val" => self.val_videos,
            _ => self.test_videos,
        }
    }

    fn manipulation_tag(&self) -> String {
        let bands: Vec<String> = self
            .perturbed_bands
            .iter()
            .map(|[u, v]| format!("{u}:{v}"))
            .collect();
        format!("dct_bands={} amplitude={}", bands.join(","), self.amplitude)
    }
}

const N_COSINES: usize = 6;

/// Per-video smooth field: drifting cosines, a gradient and channel tints.
struct VideoField {
    mean: f64,
    gradient: [f64; 2],
    tint: [f64; 3],
    waves: Vec<Wave>,
}

struct Wave {
    amplitude: f64,
    /// Spatial frequency in radians per pixel.
    k: [f64; 2],
    phase: f64,
    drift: f64,
    /// Per-channel gain so waves carry some color.
    gain: [f64; 3],
}

impl VideoField {
    fn sample(size: usize, texture: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = size as f64;
        let waves = (0..N_COSINES)
            .map(|i| {
                // Periods between a quarter and twice the frame size.
                let period = n * rng.gen_range(0.25..2.0);
                let theta = rng.gen_range(0.0..PI);
                let w = 2.0 * PI / period;
                Wave {
                    amplitude: texture * rng.gen_range(0.3..1.0) / (1.0 + i as f64 * 0.5),
                    k: [w * theta.cos(), w * theta.sin()],
                    phase: rng.gen_range(0.0..2.0 * PI),
                    drift: rng.gen_range(-0.3..0.3),
                    gain: [
                        rng.gen_range(0.8..1.2),
                        rng.gen_range(0.8..1.2),
                        rng.gen_range(0.8..1.2),
                    ],
                }
            })
            .collect();
        Self {
            mean: rng.gen_range(80.0..170.0),
            gradient: [rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)],
            tint: [
                rng.gen_range(-15.0..15.0),
                rng.gen_range(-15.0..15.0),
                rng.gen_range(-15.0..15.0),
            ],
            waves,
        }
    }

    fn render(&self, size: usize, frame: usize) -> Vec<f64> {
        let n = size as f64;
        let t = frame as f64;
        let mut px = vec![0.0; size * size * 3];
        for r in 0..size {
            for c in 0..size {
                let (y, x) = (r as f64, c as f64);
                let base = self.mean + self.gradient[0] * (y / n - 0.5) + self.gradient[1] * (x / n - 0.5);
                let mut rgb = [base; 3];
                for w in &self.waves {
                    let s = w.amplitude * (w.k[0] * y + w.k[1] * x + w.phase + w.drift * t).cos();
                    for ch in 0..3 {
                        rgb[ch] += w.gain[ch] * s;
                    }
                }
                let o = (r * size + c) * 3;
                for ch in 0..3 {
                    px[o + ch] = rgb[ch] + self.tint[ch];
                }
            }
        }
        px
    }
}

/// Adds `amplitude * (±1) * basis(u, v)` per block and band to all three
/// channels of an HWC buffer.
pub fn inject_bands(
    px: &mut [f64],
    size: usize,
    bands: &[[usize; 2]],
    amplitude: f64,
    rng: &mut impl Rng,
) {
    let patterns: Vec<[f64; 64]> = bands.iter().map(|&[u, v]| basis_pattern(u, v)).collect();
    for br in (0..size).step_by(BLOCK) {
        for bc in (0..size).step_by(BLOCK) {
            for pat in &patterns {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                for i in 0..BLOCK {
                    for j in 0..BLOCK {
                        let d = sign * amplitude * pat[i * BLOCK + j];
                        let o = ((br + i) * size + bc + j) * 3;
                        px[o] += d;
                        px[o + 1] += d;
                        px[o + 2] += d;
                    }
                }
            }
        }
    }
}

fn quantize(px: &[f64]) -> Vec<u8> {
    px.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
}

/// Renders one frame; deterministic in `(cfg.seed, stream, frame)`. The
/// fake frame of a stream is its real frame plus the band perturbation.
pub fn render_frame(cfg: &SyntheticConfig, stream: u64, label: u8, frame: usize) -> Result<ImageRgb> {
    let bytes = render_frame_bytes(cfg, stream, label, frame);
    let px = bytes.into_iter().map(f64::from).collect();
    ImageRgb::new(cfg.image_size, cfg.image_size, px)
}

fn render_frame_bytes(cfg: &SyntheticConfig, stream: u64, label: u8, frame: usize) -> Vec<u8> {
    let size = cfg.image_size;
    let mut video_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    video_rng.set_stream(stream);
    let field = VideoField::sample(size, cfg.texture_amplitude, &mut video_rng);
    let mut px = field.render(size, frame);

    let frame_rng = |salt: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt);
        r.set_stream(stream);
        r.set_word_pos((frame as u128) << 40);
        r
    };
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma >= 0");
        let mut rng = frame_rng(0x5eed_f4a3);
        px.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    if label == LABEL_FAKE && cfg.amplitude > 0.0 {
        let mut rng = frame_rng(0xfa6e_0b1d);
        inject_bands(&mut px, size, &cfg.perturbed_bands, cfg.amplitude, &mut rng);
    }
    quantize(&px)
}

/// Stream id of the base field and noise of one video.
fn stream_id(split_idx: usize, label: u8, video: usize, paired: bool) -> u64 {
    let class = if paired { 0 } else { label as u64 };
    ((split_idx as u64) << 40) | (class << 32) | video as u64
}

pub fn video_id(split: &str, label: u8, video: usize) -> String {
    format!("{split}-{}-{video:04}", class_dir(label))
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub manifests: Vec<(String, PathBuf, [usize; 2])>,
    pub hash: String,
}

/// Writes `root/<split>/{real|fake}/<video_id>/<frame>.png` plus one
/// manifest per split.
pub fn synth_generate(cfg: &SyntheticConfig, root: &Path) -> Result<SynthSummary> {
    cfg.validate()?;
    let ext = if cfg.jpeg_quality > 0 { "jpg" } else { "png" };
    let tag = cfg.manipulation_tag();
    let mut manifests = Vec::new();
    for (si, split) in SPLITS.iter().enumerate() {
        let split_root = root.join(split);
        clear_previous(&split_root)?;
        let n_videos = cfg.videos_in(split);
        if n_videos == 0 {
            continue;
        }
        for label in [0u8, 1] {
            for v in 0..n_videos {
                let dir = split_root.join(class_dir(label)).join(video_id(split, label, v));
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for f in 0..cfg.frames_per_video {
                    let bytes = render_frame_bytes(cfg, stream_id(si, label, v, cfg.paired), label, f);
                    let path = dir.join(format!("{f:04}.{ext}"));
                    save_frame(&path, cfg.image_size, bytes, cfg.jpeg_quality)?;
                }
            }
        }
        let sampling = FrameSampling {
            real: cfg.frames_per_video,
            fake: cfg.frames_per_video,
        };
        let mut manifest = build_manifest(&split_root, split, sampling)?;
        for r in &mut manifest.records {
            if r.label == LABEL_FAKE {
                r.manipulation_tag = tag.clone();
            }
        }
        let path = split_root.join(MANIFEST_FILE);
        manifest.save(&path)?;
        manifests.push((split.to_string(), path, manifest.class_counts()));
    }
    Ok(SynthSummary {
        manifests,
        hash: corpus_hash(root)?,
    })
}

fn save_frame(path: &Path, size: usize, bytes: Vec<u8>, jpeg_quality: u8) -> Result<()> {
    let img = image::RgbImage::from_raw(size as u32, size as u32, bytes)
        .expect("buffer sized from image_size");
    if jpeg_quality > 0 {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut w, jpeg_quality);
        img.write_with_encoder(enc)?;
    } else {
        img.save_with_format(path, image::ImageFormat::Png)?;
    }
    Ok(())
}

/// SHA-256 over every file of the split directories under `root`, in sorted
/// relative-path order, covering both names and contents. Anything else in
/// `root` (summaries, caches, runs) is ignored.
pub fn corpus_hash(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    for split in SPLITS {
        let dir = root.join(split);
        if dir.is_dir() {
            collect_files(&dir, &mut files)?;
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Removes a split directory left by an earlier generation so stale frames
/// cannot leak into the new corpus. Refuses to touch anything else.
fn clear_previous(split_root: &Path) -> Result<()> {
    if !split_root.exists() {
        return Ok(());
    }
    if split_root.join(MANIFEST_FILE).is_file() {
        return fs::remove_dir_all(split_root).map_err(|e| Error::io(split_root, e));
    }
    let empty = fs::read_dir(split_root)
        .map_err(|e| Error::io(split_root, e))?
        .next()
        .is_none();
    if empty {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} exists and is not a generated split; refusing to overwrite",
            split_root.display()
        )))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Loads a split's manifest written by [`synth_generate`].
pub fn load_split(root: &Path, split: &str) -> Result<CorpusManifest> {
    let path = root.join(split).join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingPath(path));
    }
    CorpusManifest::load(&path, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            image_size: 16,
            n_videos: 1,
            val_videos: 0,
            test_videos: 0,
            frames_per_video: 2,
            ..Default::default()
        }
    }

    #[test]
    fn validation() {
        assert!(small().validate().is_ok());
        let mut c = small();
        c.perturbed_bands = vec![[1, 2]];
        assert!(c.validate().is_err());
        let mut c = small();
        c.image_size = 12;
        assert!(c.validate().is_err());
        let mut c = small();
        c.amplitude = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn frames_are_deterministic_and_correlated() {
        let cfg = small();
        let a = render_frame_bytes(&cfg, 7, 0, 0);
        assert_eq!(a, render_frame_bytes(&cfg, 7, 0, 0));
        let b = render_frame_bytes(&cfg, 7, 0, 1);
        let other = render_frame_bytes(&cfg, 8, 0, 0);
        let dist = |x: &[u8], y: &[u8]| -> f64 {
            x.iter().zip(y).map(|(&p, &q)| (p as f64 - q as f64).abs()).sum::<f64>() / x.len() as f64
        };
        assert!(dist(&a, &b) < dist(&a, &other));
    }

    #[test]
    fn fakes_share_the_real_base() {
        use crate::data::LABEL_REAL;
        let mut cfg = small();
        let real = render_frame_bytes(&cfg, 3, LABEL_REAL, 1);
        let fake = render_frame_bytes(&cfg, 3, LABEL_FAKE, 1);
        assert_ne!(real, fake);
        cfg.amplitude = 0.0;
        assert_eq!(render_frame_bytes(&cfg, 3, LABEL_FAKE, 1), real);
    }
}
