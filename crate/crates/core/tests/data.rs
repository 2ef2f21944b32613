use std::collections::HashSet;
use std::path::Path;

use proptest::prelude::*;

use fdfl_core::data::{
    build_manifest, compute_stats, corpus_hash, load_image, load_split, synth_generate,
    CorpusManifest, FrameSampling, FrameSet, MixedBatchSampler, SyntheticConfig, LABEL_FAKE,
    LABEL_REAL,
};
use fdfl_core::freq::{preprocess_image, ChannelStats, TensorCache, BLOCK, CHANNELS};
use fdfl_core::plot::EnergyProfile;

fn small(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        image_size: 32,
        n_videos: 3,
        val_videos: 2,
        test_videos: 0,
        frames_per_video: 3,
        seed,
        ..SyntheticConfig::default()
    }
}

#[test]
fn synth_is_reproducible_and_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let sa = synth_generate(&small(5), a.path()).unwrap();
    let sb = synth_generate(&small(5), b.path()).unwrap();
    let sc = synth_generate(&small(6), c.path()).unwrap();
    assert_eq!(sa.hash, sb.hash);
    assert_ne!(sa.hash, sc.hash);
    assert_eq!(sa.hash, corpus_hash(a.path()).unwrap());
    // no test videos requested, no test split written
    let splits: Vec<&str> = sa.manifests.iter().map(|m| m.0.as_str()).collect();
    assert_eq!(splits, ["train", "val"]);
    assert_eq!(sa.manifests[0].2, [9, 9]);
    assert!(load_split(a.path(), "test").is_err());
}

#[test]
fn regeneration_replaces_the_previous_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let big = SyntheticConfig {
        test_videos: 2,
        ..small(5)
    };
    synth_generate(&big, dir.path()).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "not part of the corpus").unwrap();
    let again = synth_generate(&small(5), dir.path()).unwrap();

    let fresh = tempfile::tempdir().unwrap();
    assert_eq!(again.hash, synth_generate(&small(5), fresh.path()).unwrap().hash);
    assert!(!dir.path().join("test").exists());
    assert!(dir.path().join("notes.txt").exists());

    // a foreign directory in a split's place is left alone
    let foreign = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(foreign.path().join("train")).unwrap();
    std::fs::write(foreign.path().join("train").join("mine.txt"), "x").unwrap();
    assert!(synth_generate(&small(5), foreign.path()).unwrap_err().is_user_error());
    assert!(foreign.path().join("train").join("mine.txt").exists());
}

#[test]
fn manifests_are_relocatable() {
    let a = tempfile::tempdir().unwrap();
    synth_generate(&small(1), a.path()).unwrap();
    let moved = tempfile::tempdir().unwrap();
    let target = moved.path().join("corpus");
    std::fs::rename(a.path(), &target).unwrap();
    let m = load_split(&target, "val").unwrap();
    m.check_paths().unwrap();
    assert!(m.records.iter().all(|r| r.path.starts_with(&target)));
    assert!(m.records.iter().filter(|r| r.label == LABEL_FAKE).all(|r| r.manipulation_tag.contains("dct_bands")));
}

#[test]
fn manifest_sampling_keeps_evenly_spaced_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        frames_per_video: 10,
        ..small(2)
    };
    synth_generate(&cfg, dir.path()).unwrap();
    let root = dir.path().join("train");
    let m = build_manifest(&root, "train", FrameSampling { real: 10, fake: 3 }).unwrap();
    assert_eq!(m.class_counts(), [30, 9]);
    let fake_frames: Vec<&str> = m
        .records
        .iter()
        .filter(|r| r.label == LABEL_FAKE && r.video_id.ends_with("0000"))
        .map(|r| r.frame_id.as_str())
        .collect();
    assert_eq!(fake_frames, ["0000", "0003", "0006"]);
    let again = build_manifest(&root, "train", FrameSampling { real: 10, fake: 3 }).unwrap();
    assert_eq!(m, again);
}

fn mean_pixel(m: &CorpusManifest, label: u8) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for r in m.records.iter().filter(|r| r.label == label) {
        let (img, _) = load_image(&r.path).unwrap();
        sum += img.pixels().iter().sum::<f64>();
        n += img.pixels().len();
    }
    sum / n as f64
}

#[test]
fn perturbation_is_not_a_brightness_cue() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        image_size: 64,
        n_videos: 8,
        frames_per_video: 2,
        paired: true,
        ..small(3)
    };
    synth_generate(&cfg, dir.path()).unwrap();
    let m = load_split(dir.path(), "train").unwrap();
    let (real, fake) = (mean_pixel(&m, LABEL_REAL), mean_pixel(&m, LABEL_FAKE));
    assert!((fake - real).abs() / real < 0.02, "real {real} fake {fake}");
}

/// Fake minus real luma energy per band on a paired corpus equals the
/// injected energy: amplitude² on the perturbed bands, ~0 elsewhere.
#[test]
fn band_energy_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let bands = vec![[2, 5], [6, 1]];
    let amplitude = 40.0;
    let cfg = SyntheticConfig {
        image_size: 64,
        n_videos: 6,
        frames_per_video: 2,
        perturbed_bands: bands.clone(),
        amplitude,
        paired: true,
        ..small(4)
    };
    synth_generate(&cfg, dir.path()).unwrap();
    let p = EnergyProfile::from_manifest(&load_split(dir.path(), "train").unwrap()).unwrap();
    let diff = p.difference(0);
    let mut ranked: Vec<(f64, [usize; 2])> = (0..BLOCK)
        .flat_map(|u| (0..BLOCK).map(move |v| [u, v]))
        .map(|[u, v]| (diff[u][v], [u, v]))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top: HashSet<[usize; 2]> = ranked[..bands.len()].iter().map(|r| r.1).collect();
    assert_eq!(top, bands.iter().copied().collect());
    let a2 = amplitude * amplitude;
    for &(d, _) in &ranked[..bands.len()] {
        // equal RGB offsets map one-to-one onto luma; rounding and clipping
        // move the figure by a few percent at most
        assert!((d - a2).abs() < 0.05 * a2, "band gain {d} vs {a2}");
    }
    for &(d, _) in &ranked[bands.len()..] {
        assert!(d.abs() < 0.02 * a2, "unperturbed band moved by {d}");
    }
    // chroma is untouched
    for plane in 1..3 {
        let dc = p.difference(plane);
        assert!(dc.iter().flatten().all(|d| d.abs() < 0.02 * a2));
    }
}

#[test]
fn null_amplitude_profiles_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        amplitude: 0.0,
        paired: true,
        ..small(5)
    };
    synth_generate(&cfg, dir.path()).unwrap();
    let m = load_split(dir.path(), "train").unwrap();
    let p = EnergyProfile::from_manifest(&m).unwrap();
    assert_eq!(p.energy[0], p.energy[1]);

    // unpaired classes differ only by sampling noise in the high bands
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        amplitude: 0.0,
        image_size: 64,
        n_videos: 8,
        ..small(5)
    };
    synth_generate(&cfg, dir.path()).unwrap();
    let p = EnergyProfile::from_manifest(&load_split(dir.path(), "train").unwrap()).unwrap();
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            if u + v >= 4 {
                let (n, f) = (p.energy[0][0][u][v], p.energy[1][0][u][v]);
                assert!((n - f).abs() < 0.15 * n, "band ({u},{v}): {n} vs {f}");
            }
        }
    }
}

#[test]
fn stats_use_train_split_and_cache_is_transparent() {
    let dir = tempfile::tempdir().unwrap();
    synth_generate(&small(7), dir.path()).unwrap();
    let train = load_split(dir.path(), "train").unwrap();
    let stats = compute_stats(&train, None).unwrap();
    assert_eq!(stats.count as usize, train.len());

    let cache_dir = tempfile::tempdir().unwrap();
    let cache = TensorCache::new(cache_dir.path());
    let cold = compute_stats(&train, Some(&cache)).unwrap();
    let warm = compute_stats(&train, Some(&cache)).unwrap();
    assert_eq!(cold, stats);
    assert_eq!(warm, stats);
    assert!(std::fs::read_dir(cache_dir.path()).unwrap().count() > 0);

    // the train set normalized by its own stats has per-channel mean ~0
    let frames = FrameSet::load(&train, Some(&stats), None).unwrap();
    let idx: Vec<usize> = (0..frames.len()).collect();
    let (rgb, freq) = frames.batch(&idx).unwrap();
    assert!(rgb.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    let freq = freq.unwrap();
    let per = freq.data().len() / (frames.len() * CHANNELS);
    for c in 0..CHANNELS {
        let mut s = 0.0;
        for n in 0..frames.len() {
            let o = (n * CHANNELS + c) * per;
            s += freq.data()[o..o + per].iter().sum::<f64>();
        }
        // stored as f32
        assert!((s / (frames.len() * per) as f64).abs() < 1e-5, "channel {c}");
    }
}

#[test]
fn frames_match_direct_preprocessing() {
    let dir = tempfile::tempdir().unwrap();
    synth_generate(&small(8), dir.path()).unwrap();
    let val = load_split(dir.path(), "val").unwrap();
    let frames = FrameSet::load(&val, Some(&ChannelStats::identity()), None).unwrap();
    let (_, freq) = frames.batch(&[3]).unwrap();
    let (img, _) = load_image(&val.records[3].path).unwrap();
    let t = preprocess_image(&img, None).unwrap();
    let freq = freq.unwrap();
    let (h, w) = (t.height(), t.width());
    for c in [0, 77, 191] {
        for (i, v) in t.channel(c).enumerate() {
            let got = freq.data()[c * h * w + i];
            assert!((got - (v as f32) as f64).abs() == 0.0);
        }
    }
    assert!(!Path::new(&val.records[3].path).is_relative());
}

fn check_epoch(labels: &[u8], batch: usize, epoch: &[Vec<usize>]) -> Result<(), TestCaseError> {
    let minority = labels.iter().filter(|&&l| l == 0).count().min(labels.iter().filter(|&&l| l == 1).count());
    let k = labels.len().div_ceil(batch);
    let mut seen = vec![0usize; labels.len()];
    for b in epoch {
        prop_assert!(b.len() <= batch && b.len() >= 2);
        prop_assert!(b.iter().any(|&i| labels[i] == 0));
        prop_assert!(b.iter().any(|&i| labels[i] == 1));
        for &i in b {
            seen[i] += 1;
        }
    }
    prop_assert!(seen.iter().all(|&c| c >= 1));
    if minority >= k {
        prop_assert_eq!(epoch.len(), k);
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_batch_is_mixed(
        n_real in 1usize..60,
        n_fake in 1usize..60,
        batch in 2usize..12,
        seed in any::<u64>(),
    ) {
        let labels: Vec<u8> = (0..n_real).map(|_| 0).chain((0..n_fake).map(|_| 1)).collect();
        let mut s = MixedBatchSampler::new(&labels, batch, seed).unwrap();
        for _ in 0..3 {
            let e = s.next_epoch();
            check_epoch(&labels, batch, &e)?;
        }
        let mut again = MixedBatchSampler::new(&labels, batch, seed).unwrap();
        let first = again.next_epoch();
        let mut third = MixedBatchSampler::new(&labels, batch, seed).unwrap();
        prop_assert_eq!(first, third.next_epoch());
    }
}

#[test]
fn ten_thousand_streamed_batches_stay_mixed() {
    let labels: Vec<u8> = (0..103).map(|i| u8::from(i % 5 == 0)).collect();
    let s = MixedBatchSampler::new(&labels, 8, 11).unwrap();
    let mut n = 0;
    for b in s.take(10_000) {
        assert!(b.iter().any(|&i| labels[i] == 0) && b.iter().any(|&i| labels[i] == 1));
        n += 1;
    }
    assert_eq!(n, 10_000);
}
