//! Measurement studies: frame-difference statistics against temporal offset
//! (for choosing the look-ahead offset) and per-QP artifact reports.

use diqp_tensor::Tensor;

use crate::clip::ClipTensor;
use crate::error::{DiqpError, Result};
use crate::imageio::to_u8;
use crate::metrics::psnr;

/// Statistics of `|frame[anchor + t] - frame[anchor]|` for `t = 1..=max`.
/// With several anchors every column is the mean over anchors.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalStats {
    pub offsets: Vec<usize>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub nonzero: Vec<f64>,
    pub mean: Vec<f64>,
}

/// `(min, max, nonzero count, mean)` of `|a - b|`.
pub fn diff_stats(a: &Tensor, b: &Tensor) -> Result<(f64, f64, usize, f64)> {
    if a.shape() != b.shape() {
        return Err(DiqpError::Invalid(format!(
            "frame shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (mut lo, mut hi, mut nz, mut sum) = (f64::INFINITY, 0.0f64, 0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = (x - y).abs();
        lo = lo.min(d);
        hi = hi.max(d);
        nz += usize::from(d != 0.0);
        sum += d;
    }
    Ok((lo, hi, nz, sum / a.numel() as f64))
}

pub fn temporal_diff_stats(clip: &ClipTensor, anchor: usize, max_offset: usize) -> Result<TemporalStats> {
    temporal_diff_stats_multi(clip, &[anchor], max_offset)
}

pub fn temporal_diff_stats_multi(clip: &ClipTensor, anchors: &[usize], max_offset: usize) -> Result<TemporalStats> {
    if anchors.is_empty() || max_offset == 0 {
        return Err(DiqpError::Invalid("temporal statistics need an anchor and max_offset >= 1".into()));
    }
    if let Some(&a) = anchors.iter().find(|&&a| a + max_offset >= clip.frames()) {
        return Err(DiqpError::Invalid(format!(
            "anchor {a} + max offset {max_offset} exceeds the {}-frame clip",
            clip.frames()
        )));
    }
    let n = anchors.len() as f64;
    let mut s = TemporalStats {
        offsets: (1..=max_offset).collect(),
        min: vec![0.0; max_offset],
        max: vec![0.0; max_offset],
        nonzero: vec![0.0; max_offset],
        mean: vec![0.0; max_offset],
    };
    for &a in anchors {
        let base = clip.frame(a);
        for t in 1..=max_offset {
            let (lo, hi, nz, mean) = diff_stats(&clip.frame(a + t), &base)?;
            s.min[t - 1] += lo / n;
            s.max[t - 1] += hi / n;
            s.nonzero[t - 1] += nz as f64 / n;
            s.mean[t - 1] += mean / n;
        }
    }
    Ok(s)
}

/// Forward differences `s[i + 1] - s[i]`.
pub fn first_derivative(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(DiqpError::Invalid("a derivative needs at least 2 samples".into()));
    }
    Ok(series.windows(2).map(|w| w[1] - w[0]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knee {
    pub offset: usize,
    /// False when the derivative never settled; `offset` is then the maximum.
    pub found: bool,
}

/// Smallest offset `t` whose derivative `mean[t + 1] - mean[t]` stays within
/// `fraction` of the first derivative's magnitude for `run` consecutive offsets.
pub fn choose_temporal_offset(stats: &TemporalStats, fraction: f64, run: usize) -> Result<Knee> {
    if stats.mean.len() < 3 {
        return Err(DiqpError::Invalid(format!(
            "knee detection needs at least 3 offsets, got {}",
            stats.mean.len()
        )));
    }
    let d = first_derivative(&stats.mean)?;
    let limit = fraction * d[0].abs();
    let run = run.max(1);
    for start in 0..d.len() {
        if start + run > d.len() {
            break;
        }
        if d[start..start + run].iter().all(|v| v.abs() <= limit) {
            return Ok(Knee {
                offset: stats.offsets[start],
                found: true,
            });
        }
    }
    Ok(Knee {
        offset: *stats.offsets.last().expect("non-empty"),
        found: false,
    })
}

/// Per-QP distortion summary of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ArtifactReport {
    pub qp: u32,
    pub mad: f64,
    pub psnr: f64,
    pub height: usize,
    pub width: usize,
    /// Per-pixel `|raw - degraded|` averaged over channels.
    pub heatmap: Vec<f64>,
    /// Difference rendered as white in the exported image.
    pub scale: f64,
}

impl ArtifactReport {
    pub fn heatmap_mean(&self) -> f64 {
        self.heatmap.iter().sum::<f64>() / self.heatmap.len() as f64
    }

    /// 8-bit grayscale rendering with the fixed scale.
    pub fn heatmap_u8(&self) -> Vec<u8> {
        self.heatmap.iter().map(|&v| to_u8(v / self.scale)).collect()
    }
}

pub fn artifact_report(raw: &Tensor, degraded: &Tensor, qp: u32, scale: f64) -> Result<ArtifactReport> {
    let &[h, w, c] = raw.shape() else {
        return Err(DiqpError::Invalid(format!("expected an (H, W, C) frame, got {:?}", raw.shape())));
    };
    if raw.shape() != degraded.shape() {
        return Err(DiqpError::Invalid(format!(
            "frame shapes differ: {:?} vs {:?}",
            raw.shape(),
            degraded.shape()
        )));
    }
    let heatmap: Vec<f64> = raw
        .data()
        .chunks(c)
        .zip(degraded.data().chunks(c))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / c as f64)
        .collect();
    let mad = heatmap.iter().sum::<f64>() / heatmap.len() as f64;
    Ok(ArtifactReport {
        qp,
        mad,
        psnr: psnr(raw, degraded, 1.0)?,
        height: h,
        width: w,
        heatmap,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_from(mean: Vec<f64>) -> TemporalStats {
        let n = mean.len();
        TemporalStats {
            offsets: (1..=n).collect(),
            min: vec![0.0; n],
            max: mean.clone(),
            nonzero: vec![0.0; n],
            mean,
        }
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(first_derivative(&[2.0; 5]).unwrap(), vec![0.0; 4]);
        assert_eq!(first_derivative(&[1.0, 3.0, 5.0]).unwrap(), vec![2.0, 2.0]);
        assert!(first_derivative(&[1.0]).is_err());
    }

    #[test]
    fn knee_examples() {
        let c = 0.01;
        let sat = stats_from((1..=80).map(|t| (t.min(50)) as f64 * c).collect());
        assert_eq!(choose_temporal_offset(&sat, 0.05, 3).unwrap(), Knee { offset: 50, found: true });
        let flat = stats_from(vec![0.0; 10]);
        assert_eq!(choose_temporal_offset(&flat, 0.05, 3).unwrap().offset, 1);
        let lin = stats_from((1..=30).map(|t| t as f64 * c).collect());
        assert_eq!(choose_temporal_offset(&lin, 0.05, 3).unwrap(), Knee { offset: 30, found: false });
        assert!(choose_temporal_offset(&stats_from(vec![0.0, 1.0]), 0.05, 3).is_err());
    }

    #[test]
    fn single_pixel_artifact() {
        let raw = Tensor::zeros(&[4, 4, 1]);
        let mut deg = raw.clone();
        deg.data_mut()[5] = 0.5;
        let r = artifact_report(&raw, &deg, 3, 0.25).unwrap();
        assert_eq!(r.mad, 0.03125);
        assert_eq!(r.heatmap_u8()[5], 255);
        let same = artifact_report(&raw, &raw, 3, 0.25).unwrap();
        assert_eq!((same.mad, same.psnr), (0.0, crate::metrics::PSNR_CAP));
    }
}
