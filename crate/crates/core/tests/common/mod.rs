#![allow(dead_code)]

use std::sync::Arc;

use diqp::clip::synthetic_clip;
use diqp::config::ModelConfig;
use diqp::pipeline::dataset::ClipData;
use diqp::pipeline::{Dataset, SyntheticQuantizer};
use diqp::{ClipTensor, ModelInput};

/// Two stages, 8-pixel windows, every auxiliary enabled.
pub fn tiny_config() -> ModelConfig {
    let mut cfg = ModelConfig {
        stages: 2,
        base_channels: 4,
        heads: vec![1, 2],
        window: [3, 2, 2],
        blocks_per_stage: 1,
        window_side: 8,
        ..ModelConfig::default()
    };
    cfg.look_around.channels = vec![2, 3];
    cfg.look_ahead.channels = vec![2, 3];
    cfg.look_ahead.offset = 2;
    cfg.lost.frame_size = [16, 16];
    cfg.lost.max_frames = 12;
    cfg.lost.qp_max = 15;
    cfg.lost.embed_dim = 2;
    cfg.lost.hidden = 4;
    cfg.lost.base_side = 2;
    cfg
}

pub fn tiny_data(cfg: &ModelConfig, frames: usize, seed: u64) -> (Arc<ClipTensor>, ClipData) {
    let raw = Arc::new(synthetic_clip(frames, 16, 16, seed));
    let deg = SyntheticQuantizer::new(2.0).degrade(&raw, 9).unwrap();
    let data = ClipData::new("tiny", 9, raw.clone(), deg, cfg).unwrap();
    (raw, data)
}

pub fn tiny_dataset(cfg: &ModelConfig) -> Dataset {
    let (_, data) = tiny_data(cfg, 6, 3);
    Dataset::from_clips(vec![data]).unwrap()
}

pub fn tiny_input(cfg: &ModelConfig) -> ModelInput {
    tiny_dataset(cfg).example(1, [5, 3], cfg).unwrap().input
}
