//! Frame blocks `(T, H, W, C)` with values in `[0, 1]` RGB.

use diqp_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DiqpError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ClipTensor {
    data: Tensor,
}

impl ClipTensor {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.ndim() != 4 {
            return Err(DiqpError::Invalid(format!(
                "a clip needs shape (T, H, W, C), got {:?}",
                data.shape()
            )));
        }
        Ok(Self { data })
    }

    /// Stack `[H, W, C]` frames.
    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| DiqpError::Invalid("a clip needs at least one frame".into()))?;
        let mut shape = vec![frames.len()];
        shape.extend_from_slice(first.shape());
        let refs: Vec<&Tensor> = frames.iter().collect();
        for f in &refs {
            if f.shape() != first.shape() {
                return Err(DiqpError::Invalid(format!(
                    "frame shapes differ: {:?} vs {:?}",
                    f.shape(),
                    first.shape()
                )));
            }
        }
        let data: Vec<f64> = refs.iter().flat_map(|f| f.data().iter().copied()).collect();
        Self::new(Tensor::new(shape, data)?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[3]
    }

    fn plane(&self) -> usize {
        self.height() * self.width() * self.channels()
    }

    /// Frame `t` as `[H, W, C]`.
    pub fn frame(&self, t: usize) -> Tensor {
        let p = self.plane();
        Tensor::new(
            vec![self.height(), self.width(), self.channels()],
            self.data.data()[t * p..(t + 1) * p].to_vec(),
        )
        .expect("frame shape")
    }

    /// Frames at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.frames()) {
            return Err(DiqpError::Invalid(format!(
                "frame {bad} out of range for a {}-frame clip",
                self.frames()
            )));
        }
        let frames: Vec<Tensor> = indices.iter().map(|&i| self.frame(i)).collect();
        Self::from_frames(&frames)
    }

    /// Spatial crop `[T, side_h, side_w, C]` at top-left `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, side: [usize; 2]) -> Result<Self> {
        let (h, w, c) = (self.height(), self.width(), self.channels());
        if top + side[0] > h || left + side[1] > w {
            return Err(DiqpError::Invalid(format!(
                "crop {side:?} at ({top}, {left}) exceeds frame {h}x{w}"
            )));
        }
        let mut out = Vec::with_capacity(self.frames() * side[0] * side[1] * c);
        for t in 0..self.frames() {
            for y in top..top + side[0] {
                let start = ((t * h + y) * w + left) * c;
                out.extend_from_slice(&self.data.data()[start..start + side[1] * c]);
            }
        }
        Self::new(Tensor::new(vec![self.frames(), side[0], side[1], c], out)?)
    }

    /// Write `patch` into this clip at `(top, left)`, overwriting.
    pub fn paste(&mut self, patch: &ClipTensor, top: usize, left: usize) -> Result<()> {
        let (h, w, c) = (self.height(), self.width(), self.channels());
        let (ph, pw) = (patch.height(), patch.width());
        if patch.frames() != self.frames() || patch.channels() != c || top + ph > h || left + pw > w {
            return Err(DiqpError::Invalid(format!(
                "cannot paste {:?} into {:?} at ({top}, {left})",
                patch.tensor().shape(),
                self.data.shape()
            )));
        }
        let src = patch.tensor().data();
        let dst = self.data.data_mut();
        for t in 0..patch.frames() {
            for y in 0..ph {
                let d = ((t * h + top + y) * w + left) * c;
                let s = (t * ph + y) * pw * c;
                dst[d..d + pw * c].copy_from_slice(&src[s..s + pw * c]);
            }
        }
        Ok(())
    }

    pub fn clamped(&self) -> Self {
        Self {
            data: self.data.map(|v| v.clamp(0.0, 1.0)),
        }
    }
}

/// Deterministic smooth synthetic video: a drifting colour gradient, moving
/// rectangles and discs with hard edges, and mild fixed texture.
pub fn synthetic_clip(frames: usize, height: usize, width: usize, seed: u64) -> ClipTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 3] = [rng.random_range(0.2..0.6), rng.random_range(0.2..0.6), rng.random_range(0.2..0.6)];
    let grad: [f64; 3] = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
    struct Shape {
        pos: [f64; 2],
        vel: [f64; 2],
        size: f64,
        color: [f64; 3],
        disc: bool,
    }
    let shapes: Vec<Shape> = (0..4)
        .map(|i| Shape {
            pos: [rng.random_range(0.0..height as f64), rng.random_range(0.0..width as f64)],
            vel: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            size: rng.random_range(0.12..0.3) * height.min(width) as f64,
            color: [rng.random(), rng.random(), rng.random()],
            disc: i % 2 == 1,
        })
        .collect();
    let freq = [rng.random_range(0.3..0.9), rng.random_range(0.3..0.9)];
    let mut data = Vec::with_capacity(frames * height * width * 3);
    for t in 0..frames {
        let drift = t as f64 * 0.01;
        for y in 0..height {
            for x in 0..width {
                let (fy, fx) = (y as f64 / height as f64, x as f64 / width as f64);
                let tex = 0.03 * (freq[0] * y as f64 + freq[1] * x as f64 + drift * 5.0).sin();
                let mut px = [0.0; 3];
                for c in 0..3 {
                    px[c] = base[c] + grad[c] * (fy + fx + drift) + tex;
                }
                for s in &shapes {
                    let cy = (s.pos[0] + s.vel[0] * t as f64).rem_euclid(height as f64);
                    let cx = (s.pos[1] + s.vel[1] * t as f64).rem_euclid(width as f64);
                    let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                    let inside = if s.disc {
                        dy * dy + dx * dx <= s.size * s.size / 4.0
                    } else {
                        dy.abs() <= s.size / 2.0 && dx.abs() <= s.size / 2.0
                    };
                    if inside {
                        px = s.color;
                    }
                }
                data.extend(px.iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
    }
    ClipTensor::new(Tensor::new(vec![frames, height, width, 3], data).expect("clip shape")).expect("4-d")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_and_paste_roundtrip() {
        let clip = synthetic_clip(3, 12, 10, 1);
        let patch = clip.crop(2, 3, [4, 5]).unwrap();
        assert_eq!(patch.tensor().shape(), &[3, 4, 5, 3]);
        let mut blank = ClipTensor::new(Tensor::zeros(&[3, 12, 10, 3])).unwrap();
        blank.paste(&patch, 2, 3).unwrap();
        assert_eq!(blank.crop(2, 3, [4, 5]).unwrap(), patch);
        assert!(clip.crop(9, 0, [4, 4]).is_err());
    }

    #[test]
    fn synthetic_clips_are_seeded_and_in_range() {
        let a = synthetic_clip(4, 16, 16, 7);
        assert_eq!(a, synthetic_clip(4, 16, 16, 7));
        assert_ne!(a, synthetic_clip(4, 16, 16, 8));
        assert!(a.tensor().data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.select(&[3, 0]).unwrap().frame(1), a.frame(0));
    }
}
