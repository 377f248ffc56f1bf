use std::f64::consts::PI;

use crate::config::{LrSchedule, OptimizerConfig};

pub fn warmup_steps(cfg: &OptimizerConfig, total_steps: usize) -> usize {
    (cfg.warmup_fraction * total_steps as f64).round() as usize
}

/// Linear warmup from 0 to `base_lr`, then constant (or cosine decay to 0).
pub fn lr_at(step: usize, total_steps: usize, cfg: &OptimizerConfig) -> f64 {
    let warm = warmup_steps(cfg, total_steps);
    if step < warm {
        return cfg.base_lr * step as f64 / warm as f64;
    }
    match cfg.schedule {
        LrSchedule::Constant => cfg.base_lr,
        LrSchedule::Cosine => {
            let span = total_steps.saturating_sub(warm).max(1) as f64;
            let p = ((step - warm) as f64 / span).min(1.0);
            cfg.base_lr * 0.5 * (1.0 + (PI * p).cos())
        }
    }
}
