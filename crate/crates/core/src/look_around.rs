//! Global context for the encoder: bicubically downscaled full frames run
//! through a chain of temporal-separable convolution blocks, one per stage.

use diqp_tensor::{Activation, Conv3dSpec, Tensor, Var};
use rand::Rng;

use crate::clip::ClipTensor;
use crate::config::ModelConfig;
use crate::error::{DiqpError, Result};
use crate::nn::{Conv3d, Graph, ParamStore};

const A: f64 = -0.5;

/// Cubic convolution kernel with `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Four clamped source taps and weights for each output position.
fn axis_taps(src: usize, dst: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = (i as f64 + 0.5) * scale - 0.5;
            let base = s.floor();
            let mut idx = [0; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let p = base + k as f64 - 1.0;
                idx[k] = p.clamp(0.0, (src - 1) as f64) as usize;
                w[k] = cubic(s - p);
            }
            (idx, w)
        })
        .collect()
}

/// Bicubic resize of an `[H, W, C]` frame with half-pixel centres and edge
/// clamping (no antialiasing).
pub fn bicubic_downsample(frame: &Tensor, target: [usize; 2]) -> Result<Tensor> {
    let &[h, w, c] = frame.shape() else {
        return Err(DiqpError::Invalid(format!("expected an (H, W, C) frame, got {:?}", frame.shape())));
    };
    if target[0] == 0 || target[1] == 0 {
        return Err(DiqpError::Invalid(format!("bicubic target {target:?} has a zero side")));
    }
    if target[0] > h || target[1] > w {
        return Err(DiqpError::Invalid(format!("bicubic target {target:?} exceeds source {h}x{w}")));
    }
    let (rows, cols) = (axis_taps(h, target[0]), axis_taps(w, target[1]));
    let src = frame.data();
    let mut mid = vec![0.0; target[0] * w * c];
    for (i, (idx, wt)) in rows.iter().enumerate() {
        for k in 0..4 {
            let s = &src[idx[k] * w * c..(idx[k] + 1) * w * c];
            let d = &mut mid[i * w * c..(i + 1) * w * c];
            d.iter_mut().zip(s).for_each(|(d, s)| *d += wt[k] * s);
        }
    }
    let mut out = vec![0.0; target[0] * target[1] * c];
    for i in 0..target[0] {
        for (j, (idx, wt)) in cols.iter().enumerate() {
            for ch in 0..c {
                out[(i * target[1] + j) * c + ch] = (0..4).map(|k| wt[k] * mid[(i * w + idx[k]) * c + ch]).sum();
            }
        }
    }
    Ok(Tensor::new(vec![target[0], target[1], c], out)?)
}

pub fn downsample_clip(clip: &ClipTensor, target: [usize; 2]) -> Result<ClipTensor> {
    let frames = (0..clip.frames())
        .map(|t| bicubic_downsample(&clip.frame(t), target))
        .collect::<Result<Vec<_>>>()?;
    ClipTensor::from_frames(&frames)
}

/// Spatial `1 x k x k` convolution then temporal `kt x 1 x 1`, each followed
/// by the activation.
#[derive(Clone, Debug)]
pub struct TemporalSeparableBlock {
    pub spatial: Conv3d,
    pub temporal: Conv3d,
    pub act: Activation,
}

impl TemporalSeparableBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        temporal_kernel: usize,
        stride: usize,
        act: Activation,
    ) -> Self {
        let spatial = Conv3dSpec::new([1, kernel, kernel], [1, stride, stride], [0, kernel / 2, kernel / 2]);
        let temporal = Conv3dSpec::same([temporal_kernel, 1, 1]);
        Self {
            spatial: Conv3d::new(store, rng, &format!("{name}.spatial"), cin, cout, spatial),
            temporal: Conv3d::new(store, rng, &format!("{name}.temporal"), cout, cout, temporal),
            act,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let y = self.spatial.forward(g, x)?;
        let y = g.tape.activation(y, self.act);
        let y = self.temporal.forward(g, y)?;
        Ok(g.tape.activation(y, self.act))
    }
}

/// `K` chained blocks; block 0 keeps the resolution, later blocks halve it.
pub fn block_stack(
    store: &mut ParamStore,
    rng: &mut impl Rng,
    name: &str,
    cfg: &ModelConfig,
    channels: &[usize],
) -> Vec<TemporalSeparableBlock> {
    let la = &cfg.look_around;
    let mut cin = 3;
    channels
        .iter()
        .enumerate()
        .map(|(i, &cout)| {
            let stride = if i == 0 { 1 } else { 2 };
            let b = TemporalSeparableBlock::new(
                store,
                rng,
                &format!("{name}.{i}"),
                cin,
                cout,
                la.kernel,
                la.temporal_kernel,
                stride,
                cfg.conv_activation(),
            );
            cin = cout;
            b
        })
        .collect()
}

pub fn run_stack(g: &mut Graph, blocks: &[TemporalSeparableBlock], x: Var) -> Result<Vec<Var>> {
    let mut levels = Vec::with_capacity(blocks.len());
    let mut h = x;
    for b in blocks {
        h = b.forward(g, h)?;
        levels.push(h);
    }
    Ok(levels)
}

#[derive(Clone, Debug)]
pub struct LookAround {
    pub blocks: Vec<TemporalSeparableBlock>,
    expect: Vec<usize>,
    level_shapes: Vec<[usize; 4]>,
}

impl LookAround {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, cfg: &ModelConfig) -> Self {
        let ch = &cfg.look_around.channels;
        let [dh, dw] = cfg.down_size();
        Self {
            blocks: block_stack(store, rng, "look_around", cfg, ch),
            expect: vec![cfg.clip_len, dh, dw, 3],
            level_shapes: (0..cfg.stages)
                .map(|i| [cfg.clip_len, cfg.side(i), cfg.side(i), ch[i]])
                .collect(),
        }
    }

    /// Planned `[T, H, W, C]` of each level, encoder order.
    pub fn level_shapes(&self) -> &[[usize; 4]] {
        &self.level_shapes
    }

    /// `ds` is the downscaled degraded clip `[T, H', W', 3]`.
    pub fn forward(&self, g: &mut Graph, ds: Var) -> Result<Vec<Var>> {
        if g.shape(ds) != self.expect.as_slice() {
            return Err(DiqpError::Shape {
                stage: "look_around".into(),
                tensor: "downscaled clip".into(),
                got: g.shape(ds).to_vec(),
                want: self.expect.clone(),
            });
        }
        run_stack(g, &self.blocks, ds)
    }
}
