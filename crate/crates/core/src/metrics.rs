//! PSNR and SSIM computed over RGB values.

use diqp_tensor::Tensor;

use crate::error::{DiqpError, Result};

/// Reported for identical inputs and as an upper bound.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(DiqpError::Invalid(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b, "mse")?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.numel() as f64)
}

/// `10 log10(peak^2 / MSE)` over every element, capped at 99 dB.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable Gaussian filter of one `h x w` plane.
fn filter(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|k| taps[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|k| taps[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two `[H, W, C]` images with data range `peak`: 11x11
/// Gaussian window (sigma 1.5), valid positions only, averaged over channels.
pub fn ssim(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    same_shape(a, b, "ssim")?;
    let &[h, w, c] = a.shape() else {
        return Err(DiqpError::Invalid(format!("ssim expects (H, W, C) images, got {:?}", a.shape())));
    };
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(DiqpError::Invalid(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (c1, c2) = ((K1 * peak).powi(2), (K2 * peak).powi(2));
    let mut total = 0.0;
    for ch in 0..c {
        let x: Vec<f64> = (0..h * w).map(|i| a.data()[i * c + ch]).collect();
        let y: Vec<f64> = (0..h * w).map(|i| b.data()[i * c + ch]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filter(&x, h, w, &taps), filter(&y, h, w, &taps));
        let (exx, eyy, exy) = (filter(&xx, h, w, &taps), filter(&yy, h, w, &taps), filter(&xy, h, w, &taps));
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = exx[i] - ux * ux;
            let vy = eyy[i] - uy * uy;
            let cxy = exy[i] - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / c as f64)
}

/// Mean per-frame SSIM of two `[T, H, W, C]` clips.
pub fn ssim_clip(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    same_shape(a, b, "ssim")?;
    if a.ndim() != 4 {
        return ssim(a, b, peak);
    }
    let t = a.shape()[0];
    let plane = a.numel() / t;
    let shape = &a.shape()[1..];
    let mut total = 0.0;
    for f in 0..t {
        let fa = Tensor::new(shape.to_vec(), a.data()[f * plane..(f + 1) * plane].to_vec())?;
        let fb = Tensor::new(shape.to_vec(), b.data()[f * plane..(f + 1) * plane].to_vec())?;
        total += ssim(&fa, &fb, peak)?;
    }
    Ok(total / t as f64)
}
