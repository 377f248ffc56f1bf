//! Future-frame context for the decoder, attenuated by the window's
//! temporal position in the clip.

use diqp_tensor::{Conv3dSpec, Tensor, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{DiqpError, Result};
use crate::look_around::{block_stack, run_stack, TemporalSeparableBlock};
use crate::nn::{Conv3d, Graph, ParamStore};

/// `(total - middle) / total`.
pub fn compute_wdf(total_frames: usize, middle_frame_pos: usize) -> Result<f64> {
    if total_frames == 0 {
        return Err(DiqpError::Invalid("weight decay factor of an empty clip".into()));
    }
    if middle_frame_pos >= total_frames {
        return Err(DiqpError::Invalid(format!(
            "middle frame {middle_frame_pos} outside a {total_frames}-frame clip"
        )));
    }
    Ok((total_frames - middle_frame_pos) as f64 / total_frames as f64)
}

/// Frame `n + offset`, or the last frame when that runs past the clip.
pub fn select_future_index(n: usize, offset: usize, total: usize) -> usize {
    (n + offset).min(total.saturating_sub(1))
}

/// One window crop `[h, w, 3]` and its top-left corner.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowCrop {
    pub crop: [usize; 2],
    pub frame: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LookAheadInput {
    /// Downscaled last input frame and downscaled future frame, `[2, H', W', 3]`.
    pub group1: Tensor,
    /// Window of the last input frame.
    pub current: WindowCrop,
    /// Window of the future frame at the same coordinates.
    pub future: WindowCrop,
    pub wdf: f64,
}

impl LookAheadInput {
    pub fn group2(&self) -> Result<Tensor> {
        if self.current.crop != self.future.crop {
            return Err(DiqpError::Invalid(format!(
                "look-ahead windows disagree: current at {:?}, future at {:?}",
                self.current.crop, self.future.crop
            )));
        }
        Ok(Tensor::concat_outer(&[&self.current.frame, &self.future.frame])?
            .reshape(&[2, self.current.frame.shape()[0], self.current.frame.shape()[1], 3])?)
    }
}

#[derive(Clone, Debug)]
pub struct LookAhead {
    pub group1: Vec<TemporalSeparableBlock>,
    pub group2: Vec<TemporalSeparableBlock>,
    pub project: Vec<Conv3d>,
    down: [usize; 2],
    side: usize,
    level_shapes: Vec<[usize; 4]>,
}

impl LookAhead {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, cfg: &ModelConfig) -> Self {
        let ch = &cfg.look_ahead.channels;
        let group1 = block_stack(store, rng, "look_ahead.group1", cfg, ch);
        let group2 = block_stack(store, rng, "look_ahead.group2", cfg, ch);
        // (2, 3, 3) kernel with temporal padding 1 maps the 2 frames to 3.
        let spec = Conv3dSpec::new([2, 3, 3], [1, 1, 1], [1, 1, 1]);
        let project = ch
            .iter()
            .enumerate()
            .map(|(i, &c)| Conv3d::new(store, rng, &format!("look_ahead.project.{i}"), 2 * c, c, spec))
            .collect();
        let k = cfg.stages;
        Self {
            group1,
            group2,
            project,
            down: cfg.down_size(),
            side: cfg.window_side,
            level_shapes: (0..k)
                .map(|j| {
                    let i = k - 1 - j;
                    [cfg.clip_len, cfg.side(i), cfg.side(i), ch[i]]
                })
                .collect(),
        }
    }

    /// Planned `[T, H, W, C]` of each level, decoder order.
    pub fn level_shapes(&self) -> &[[usize; 4]] {
        &self.level_shapes
    }

    /// Levels in decoder order (deepest first), each multiplied by the WDF.
    pub fn forward(&self, g: &mut Graph, input: &LookAheadInput) -> Result<Vec<Var>> {
        let group2 = input.group2()?;
        let want1 = [2, self.down[0], self.down[1], 3];
        let want2 = [2, self.side, self.side, 3];
        for (name, t, want) in [("group1", &input.group1, want1), ("group2", &group2, want2)] {
            if t.shape() != want {
                return Err(DiqpError::Shape {
                    stage: "look_ahead".into(),
                    tensor: name.into(),
                    got: t.shape().to_vec(),
                    want: want.to_vec(),
                });
            }
        }
        let x1 = g.input(input.group1.clone());
        let x2 = g.input(group2);
        let a = run_stack(g, &self.group1, x1)?;
        let b = run_stack(g, &self.group2, x2)?;
        let mut levels = Vec::with_capacity(a.len());
        for ((a, b), proj) in a.into_iter().zip(b).zip(&self.project) {
            let both = g.tape.concat(&[a, b])?;
            let y = proj.forward(g, both)?;
            levels.push(g.tape.scale(y, input.wdf));
        }
        levels.reverse();
        Ok(levels)
    }
}
