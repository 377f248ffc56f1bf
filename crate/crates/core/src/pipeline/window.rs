//! Random window crops with their binary masks and conditioning scalars.

use diqp_tensor::Tensor;
use rand::Rng;

use crate::clip::ClipTensor;
use crate::error::{DiqpError, Result};
use crate::lost::ConditionalInfo;

/// A square window of `side` pixels at `crop` inside a `dims` frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mask {
    pub dims: [usize; 2],
    pub crop: [usize; 2],
    pub side: usize,
}

impl Mask {
    pub fn new(dims: [usize; 2], crop: [usize; 2], side: usize) -> Result<Self> {
        if crop[0] + side > dims[0] || crop[1] + side > dims[1] {
            return Err(DiqpError::Invalid(format!(
                "window of side {side} at {crop:?} exceeds frame {dims:?}"
            )));
        }
        Ok(Self { dims, crop, side })
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.crop[0]..self.crop[0] + self.side).contains(&y) && (self.crop[1]..self.crop[1] + self.side).contains(&x)
    }

    /// `[H, W]` plane of ones inside the window and zeros elsewhere.
    pub fn binary(&self) -> Tensor {
        let w = self.dims[1];
        Tensor::from_fn(&self.dims, |i| if self.contains(i / w, i % w) { 1.0 } else { 0.0 })
    }

    /// `F o M` for every frame and channel.
    pub fn apply(&self, clip: &ClipTensor) -> Result<ClipTensor> {
        if [clip.height(), clip.width()] != self.dims {
            return Err(DiqpError::Invalid(format!(
                "mask for {:?} applied to a {}x{} clip",
                self.dims,
                clip.height(),
                clip.width()
            )));
        }
        let m = self.binary();
        let c = clip.channels();
        let plane = m.numel();
        let data: Vec<f64> = clip
            .tensor()
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * m.data()[(i / c) % plane])
            .collect();
        ClipTensor::new(Tensor::new(clip.tensor().shape().to_vec(), data)?)
    }
}

/// One training window: the raw and degraded crops plus conditioning.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub mask: Mask,
    pub raw: ClipTensor,
    pub degraded: ClipTensor,
    pub info: ConditionalInfo,
}

impl WindowSample {
    /// Cut the window at `crop` out of 3-frame raw and degraded clips.
    pub fn extract(
        raw: &ClipTensor,
        degraded: &ClipTensor,
        crop: [usize; 2],
        side: usize,
        qp: u32,
        middle_frame: usize,
        down: [usize; 2],
    ) -> Result<Self> {
        let dims = [raw.height(), raw.width()];
        let mask = Mask::new(dims, crop, side)?;
        Ok(Self {
            mask,
            raw: raw.crop(crop[0], crop[1], [side, side])?,
            degraded: degraded.crop(crop[0], crop[1], [side, side])?,
            info: ConditionalInfo::new(qp, middle_frame, crop, dims, down)?,
        })
    }
}

/// Uniform top-left over every valid position, not tile aligned.
pub fn sample_crop(dims: [usize; 2], side: usize, rng: &mut impl Rng) -> Result<[usize; 2]> {
    if side == 0 || side > dims[0] || side > dims[1] {
        return Err(DiqpError::Invalid(format!("window side {side} does not fit a {dims:?} frame")));
    }
    Ok([rng.random_range(0..=dims[0] - side), rng.random_range(0..=dims[1] - side)])
}

pub fn sample_window(
    raw: &ClipTensor,
    degraded: &ClipTensor,
    side: usize,
    qp: u32,
    middle_frame: usize,
    down: [usize; 2],
    rng: &mut impl Rng,
) -> Result<WindowSample> {
    let crop = sample_crop([raw.height(), raw.width()], side, rng)?;
    WindowSample::extract(raw, degraded, crop, side, qp, middle_frame, down)
}
