//! 8-bit PNG frames to and from `[H, W, 3]` tensors in `[0, 1]`.

use std::path::Path;

use diqp_tensor::Tensor;
use image::{GrayImage, RgbImage};

use crate::error::{DiqpError, Result};

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_rgb(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| DiqpError::format(path, e.to_string()))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(Tensor::new(vec![h as usize, w as usize, 3], data)?)
}

pub fn write_rgb(path: &Path, frame: &Tensor) -> Result<()> {
    let &[h, w, 3] = frame.shape() else {
        return Err(DiqpError::Invalid(format!("cannot write a {:?} tensor as RGB", frame.shape())));
    };
    let raw = frame.data().iter().map(|&v| to_u8(v)).collect();
    let img = RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer size matches");
    img.save(path).map_err(|e| DiqpError::format(path, e.to_string()))
}

pub fn write_gray(path: &Path, height: usize, width: usize, values: &[u8]) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, values.to_vec())
        .ok_or_else(|| DiqpError::Invalid("grayscale buffer size mismatch".into()))?;
    img.save(path).map_err(|e| DiqpError::format(path, e.to_string()))
}
