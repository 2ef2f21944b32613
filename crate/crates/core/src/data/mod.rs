//! Corpus manifests, the synthetic spectral-perturbation corpus, frame
//! loading and mixed-class batch sampling.

mod corpus;
mod manifest;
mod sampler;
mod synth;

pub use corpus::{compute_stats, load_image, raw_frequency, rgb_scale, FrameSet};
pub use manifest::{
    build_manifest, class_dir, evenly_spaced, CorpusManifest, FrameSampling, SampleRecord,
    LABEL_FAKE, LABEL_REAL,
};
pub use sampler::MixedBatchSampler;
pub use synth::{
    corpus_hash, inject_bands, load_split, render_frame, synth_generate, video_id, SynthSummary,
    SyntheticConfig, MANIFEST_FILE, SPLITS,
};
