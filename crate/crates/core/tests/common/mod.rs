#![allow(dead_code)]

use std::path::Path;

use fdfl_core::data::synth_generate;
use fdfl_core::train::{Corpus, ExperimentConfig};

/// A model small enough to train for a few dozen steps in a test.
pub fn tiny_config(root: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.data.root = root.to_path_buf();
    c.data.image_size = 32;
    c.data.n_videos = 6;
    c.data.val_videos = 4;
    c.data.test_videos = 4;
    c.data.frames_per_video = 2;
    c.model.backbone.stem_channels = 4;
    c.model.backbone.stage_channels = vec![6, 8, 8, 12];
    c.model.afimb.grouped_conv_out = 6;
    c.model.afimb.mid_channels = 6;
    c.model.afimb.attention_reduction = 3;
    c.model.afimb.out_channels = 6;
    c.model.embedding_dim = 8;
    c.optim.lr = 1e-3;
    c.run.batch_size = 6;
    c.run.epochs = 2;
    c.run.eval_batch_size = 16;
    c
}

pub fn tiny_corpus(root: &Path) -> (ExperimentConfig, Corpus) {
    let cfg = tiny_config(root);
    synth_generate(&cfg.data.synthetic(), root).unwrap();
    let corpus = Corpus::load(root, None).unwrap();
    (cfg, corpus)
}
