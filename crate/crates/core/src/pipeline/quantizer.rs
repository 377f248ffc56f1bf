//! Built-in stand-in for a codec: blockwise 8x8 DCT with uniform
//! coefficient quantization whose step grows linearly with QP.

use std::f64::consts::PI;

use diqp_tensor::Tensor;

use crate::clip::ClipTensor;
use crate::error::Result;

const B: usize = 8;

fn dct_matrix() -> [[f64; B]; B] {
    let mut m = [[0.0; B]; B];
    for (k, row) in m.iter_mut().enumerate() {
        let scale = if k == 0 { (1.0 / B as f64).sqrt() } else { (2.0 / B as f64).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = scale * (PI * (2 * n + 1) as f64 * k as f64 / (2 * B) as f64).cos();
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticQuantizer {
    /// Quantizer step per QP unit, in 8-bit code values.
    pub strength: f64,
}

impl SyntheticQuantizer {
    pub fn new(strength: f64) -> Self {
        Self { strength }
    }

    pub fn step(&self, qp: u32) -> f64 {
        self.strength * qp as f64
    }

    /// Degrade one `[H, W, C]` frame. A zero step returns the input unchanged.
    pub fn degrade_frame(&self, frame: &Tensor, qp: u32) -> Result<Tensor> {
        let step = self.step(qp);
        if step == 0.0 {
            return Ok(frame.clone());
        }
        let (h, w, c) = (frame.shape()[0], frame.shape()[1], frame.shape()[2]);
        let d = dct_matrix();
        let src = frame.data();
        let mut out = vec![0.0; src.len()];
        let mut block = [[0.0; B]; B];
        let mut tmp = [[0.0; B]; B];
        for ch in 0..c {
            for by in (0..h).step_by(B) {
                for bx in (0..w).step_by(B) {
                    for (i, row) in block.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            let (y, x) = ((by + i).min(h - 1), (bx + j).min(w - 1));
                            *v = src[(y * w + x) * c + ch] * 255.0 - 128.0;
                        }
                    }
                    // Forward transform D X D^T, quantize, inverse D^T Q D.
                    for i in 0..B {
                        for j in 0..B {
                            tmp[i][j] = (0..B).map(|k| d[i][k] * block[k][j]).sum();
                        }
                    }
                    for i in 0..B {
                        for j in 0..B {
                            let coef: f64 = (0..B).map(|k| tmp[i][k] * d[j][k]).sum();
                            block[i][j] = (coef / step).round() * step;
                        }
                    }
                    for i in 0..B {
                        for j in 0..B {
                            tmp[i][j] = (0..B).map(|k| d[k][i] * block[k][j]).sum();
                        }
                    }
                    for i in 0..B.min(h - by) {
                        for j in 0..B.min(w - bx) {
                            let v: f64 = (0..B).map(|k| tmp[i][k] * d[k][j]).sum();
                            out[((by + i) * w + bx + j) * c + ch] = ((v + 128.0) / 255.0).clamp(0.0, 1.0);
                        }
                    }
                }
            }
        }
        Ok(Tensor::new(frame.shape().to_vec(), out)?)
    }

    pub fn degrade(&self, clip: &ClipTensor, qp: u32) -> Result<ClipTensor> {
        let frames = (0..clip.frames())
            .map(|t| self.degrade_frame(&clip.frame(t), qp))
            .collect::<Result<Vec<_>>>()?;
        ClipTensor::from_frames(&frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_is_orthonormal() {
        let d = dct_matrix();
        for i in 0..B {
            for j in 0..B {
                let dot: f64 = (0..B).map(|k| d[i][k] * d[j][k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiny_step_nearly_identity_and_zero_step_exact() {
        let f = Tensor::from_fn(&[10, 13, 3], |i| ((i * 7919) % 256) as f64 / 255.0);
        let q = SyntheticQuantizer::new(0.0);
        assert_eq!(q.degrade_frame(&f, 51).unwrap(), f);
        let q = SyntheticQuantizer::new(1e-9);
        assert!(q.degrade_frame(&f, 3).unwrap().max_abs_diff(&f) < 1e-6);
    }
}
