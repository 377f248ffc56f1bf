//! Restoration `F_res = F_iqp + noise'` over whole clips, and evaluation.

use diqp_tensor::Tensor;
use serde::Serialize;

use crate::clip::ClipTensor;
use crate::config::RestoreConfig;
use crate::error::{DiqpError, Result};
use crate::look_around::downsample_clip;
use crate::metrics::{psnr, ssim_clip};
use crate::model::{DiqpModel, ModelInput};
use crate::pipeline::{assemble_input, segment_clip};

/// One window: the degraded clip plus the predicted noise. Not clamped.
pub fn restore_window(model: &DiqpModel, input: &ModelInput) -> Result<Tensor> {
    let noise = model.predict(input)?;
    Ok(input.clip.zip_map(&noise, |a, n| a + n)?)
}

/// Noise `raw - degraded`, nudged by single ulps wherever that makes
/// `degraded + noise` land exactly on `raw`. Some pairs have no exact
/// solution in `f64` (the sum lives on the coarser grid of the larger
/// operand); those stay within one ulp.
pub fn oracle_noise(raw: &Tensor, degraded: &Tensor) -> Result<Tensor> {
    raw.zip_map(degraded, |r, d| {
        let mut n = r - d;
        for _ in 0..4 {
            let s = d + n;
            if s == r {
                break;
            }
            n = if s < r { n.next_up() } else { n.next_down() };
        }
        n
    })
    .map_err(Into::into)
}

/// Window origins along one axis: multiples of `side`, the last flush with the edge.
pub fn tile_positions(len: usize, side: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..len / side).map(|i| i * side).collect();
    if len % side != 0 {
        p.push(len - side);
    }
    p
}

fn restore_pass(model: &DiqpModel, degraded: &ClipTensor, qp: u32) -> Result<ClipTensor> {
    let cfg = &model.config;
    let side = cfg.window_side;
    let (t, h, w) = (degraded.frames(), degraded.height(), degraded.width());
    if h < side || w < side {
        return Err(DiqpError::Invalid(format!("clip {h}x{w} is smaller than the {side}-pixel window")));
    }
    let downscaled = downsample_clip(degraded, cfg.down_size())?;
    let mut segments: Vec<([usize; 3], usize)> = segment_clip(t)?.iter().map(|s| (s.frames, 0)).collect();
    if t % 3 != 0 {
        // Trailing frames ride on the last full 3-frame window.
        segments.push(([t - 3, t - 2, t - 1], 3 - t % 3));
    }
    let mut out = degraded.clone();
    let (ys, xs) = (tile_positions(h, side), tile_positions(w, side));
    for (frames, skip) in segments {
        let mut seg = degraded.select(&frames)?;
        for &y in &ys {
            for &x in &xs {
                let input = assemble_input(degraded, &downscaled, frames, [y, x], qp, cfg)?;
                let restored = ClipTensor::new(restore_window(model, &input)?)?;
                seg.paste(&restored, y, x)?;
            }
        }
        let plane = h * w * degraded.channels();
        for (k, &f) in frames.iter().enumerate().skip(skip) {
            let src = &seg.tensor().data()[k * plane..(k + 1) * plane];
            out.tensor_mut().data_mut()[f * plane..(f + 1) * plane].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Restore a whole degraded clip window by window. With a QP ladder, each
/// further pass re-conditions the previous output on a lower QP.
pub fn restore_clip(model: &DiqpModel, degraded: &ClipTensor, qp: u32, ladder: &RestoreConfig) -> Result<ClipTensor> {
    let mut cur = restore_pass(model, degraded, qp)?;
    for k in 1..=ladder.ladder_steps {
        let q = qp.saturating_sub(k as u32 * ladder.ladder_qp_step);
        cur = restore_pass(model, &cur, q)?;
    }
    Ok(cur)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub clip: String,
    pub segment: usize,
    pub qp: u32,
    pub psnr_in: f64,
    pub psnr_out: f64,
    pub ssim_in: f64,
    pub ssim_out: f64,
}

/// Per-segment metrics of the degraded input and the (clamped) restoration
/// against the raw clip, on full frames.
pub fn evaluate_clip(
    model: &DiqpModel,
    clip_id: &str,
    raw: &ClipTensor,
    degraded: &ClipTensor,
    qp: u32,
    ladder: &RestoreConfig,
) -> Result<Vec<MetricsRow>> {
    let restored = restore_clip(model, degraded, qp, ladder)?.clamped();
    segment_clip(raw.frames())?
        .iter()
        .map(|s| {
            let r = raw.select(&s.frames)?;
            let d = degraded.select(&s.frames)?;
            let o = restored.select(&s.frames)?;
            Ok(MetricsRow {
                clip: clip_id.to_string(),
                segment: s.index,
                qp,
                psnr_in: psnr(r.tensor(), d.tensor(), 1.0)?,
                psnr_out: psnr(r.tensor(), o.tensor(), 1.0)?,
                ssim_in: ssim_clip(r.tensor(), d.tensor(), 1.0)?,
                ssim_out: ssim_clip(r.tensor(), o.tensor(), 1.0)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_cover_the_axis() {
        assert_eq!(tile_positions(64, 32), vec![0, 32]);
        assert_eq!(tile_positions(70, 32), vec![0, 32, 38]);
        assert_eq!(tile_positions(32, 32), vec![0]);
    }

    #[test]
    fn oracle_noise_recovers_raw() {
        let raw = Tensor::from_fn(&[256], |i| i as f64 / 255.0);
        let deg = Tensor::from_fn(&[256], |i| ((i * 37) % 256) as f64 / 255.0);
        let n = oracle_noise(&raw, &deg).unwrap();
        let back = deg.zip_map(&n, |a, b| a + b).unwrap();
        assert!(back.max_abs_diff(&raw) <= f64::EPSILON);
        let bytes = |t: &Tensor| t.data().iter().map(|&v| crate::imageio::to_u8(v)).collect::<Vec<_>>();
        assert_eq!(bytes(&back), bytes(&raw));
    }
}
