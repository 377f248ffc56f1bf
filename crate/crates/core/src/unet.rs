//! U-shaped window-attention transformer that predicts the coding noise of
//! a 3-frame window clip.

use std::sync::Arc;

use diqp_tensor::{Activation, Conv3dSpec, HeadLayout, Var};
use rand::Rng;

use crate::config::{Injection, ModelConfig};
use crate::error::{DiqpError, Result};
use crate::lost::attach_lost;
use crate::nn::{Conv3d, Depthwise, Graph, LayerNorm, Linear, ParamStore};

fn dims(g: &Graph, x: Var) -> [usize; 4] {
    let s = g.shape(x);
    [s[0], s[1], s[2], s[3]]
}

/// Multi-head self-attention inside non-overlapping `(wt, wh, ww)` windows.
#[derive(Clone, Debug)]
pub struct WindowAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub heads: usize,
    pub window: [usize; 3],
}

impl WindowAttention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dim: usize,
        heads: usize,
        window: [usize; 3],
    ) -> Self {
        Self {
            qkv: Linear::new(store, rng, &format!("{name}.qkv"), dim, 3 * dim, true),
            proj: Linear::new(store, rng, &format!("{name}.proj"), dim, dim, true),
            heads,
            window,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let [t, h, w, c] = dims(g, x);
        let dh = c / self.heads;
        let layout = HeadLayout::new([t, h, w], self.window, self.heads, dh)?;
        let shape = layout.split_shape();
        let qkv = self.qkv.forward(g, x)?;
        let q = g.tape.gather(qkv, Arc::new(layout.split_index(3 * c, 0)), &shape)?;
        let k = g.tape.gather(qkv, Arc::new(layout.split_index(3 * c, c)), &shape)?;
        let v = g.tape.gather(qkv, Arc::new(layout.split_index(3 * c, 2 * c)), &shape)?;
        let scores = g.tape.bmm(q, k, false, true)?;
        let scores = g.tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = g.tape.softmax(scores);
        let o = g.tape.bmm(attn, v, false, false)?;
        let merged = g.tape.gather(o, Arc::new(layout.merge_index()), &[t, h, w, c])?;
        self.proj.forward(g, merged)
    }
}

/// Locally-enhanced feed-forward: pointwise expansion, depthwise `1 x 3 x 3`
/// convolution, activation, pointwise projection.
#[derive(Clone, Debug)]
pub struct Leff {
    pub expand: Linear,
    pub depthwise: Depthwise,
    pub project: Linear,
    pub act: Activation,
}

impl Leff {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, dim: usize, ratio: usize, act: Activation) -> Self {
        let hidden = dim * ratio;
        Self {
            expand: Linear::new(store, rng, &format!("{name}.expand"), dim, hidden, true),
            depthwise: Depthwise::new(store, rng, &format!("{name}.depthwise"), hidden, [1, 3, 3]),
            project: Linear::new(store, rng, &format!("{name}.project"), hidden, dim, true),
            act,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let y = self.expand.forward(g, x)?;
        let y = self.depthwise.forward(g, y)?;
        let y = g.tape.activation(y, self.act);
        self.project.forward(g, y)
    }
}

/// Pre-norm window transformer block with residuals around attention and
/// the feed-forward.
#[derive(Clone, Debug)]
pub struct LeWinBlock {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub leff: Leff,
}

impl LeWinBlock {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, cfg: &ModelConfig, dim: usize, stage: usize) -> Self {
        Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim, cfg.norm_eps),
            attn: WindowAttention::new(store, rng, &format!("{name}.attn"), dim, cfg.heads_at(stage), cfg.window_at(stage)),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim, cfg.norm_eps),
            leff: Leff::new(store, rng, &format!("{name}.leff"), dim, cfg.leff_ratio, cfg.activation()),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let y = self.norm1.forward(g, x)?;
        let y = self.attn.forward(g, y)?;
        let x = g.tape.add(x, y)?;
        let y = self.norm2.forward(g, x)?;
        let y = self.leff.forward(g, y)?;
        Ok(g.tape.add(x, y)?)
    }
}

/// Re-attach the conditioning tile, fuse back to `dim` channels, then run a
/// transformer block.
#[derive(Clone, Debug)]
pub struct ConditionedBlock {
    pub fuse: Linear,
    pub block: LeWinBlock,
}

impl ConditionedBlock {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, cfg: &ModelConfig, dim: usize, stage: usize) -> Self {
        Self {
            fuse: Linear::new(store, rng, &format!("{name}.fuse"), dim + 1, dim, true),
            block: LeWinBlock::new(store, rng, name, cfg, dim, stage),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, tile: Var) -> Result<Var> {
        let y = attach_lost(g, x, tile)?;
        let y = self.fuse.forward(g, y)?;
        self.block.forward(g, y)
    }
}

#[derive(Clone, Debug)]
pub struct EncoderStage {
    pub blocks: Vec<ConditionedBlock>,
    pub down: Conv3d,
}

#[derive(Clone, Debug)]
pub struct DecoderStage {
    pub up: Conv3d,
    pub fuse: Linear,
    pub blocks: Vec<ConditionedBlock>,
}

/// Shapes seen during one forward pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShapeLedger {
    /// Output of each encoder stage's blocks (the skip tensors).
    pub encoder: Vec<[usize; 4]>,
    /// Input to each encoder downsampling, after injection.
    pub downsampled: Vec<[usize; 4]>,
    pub bottleneck: [usize; 4],
    /// Output of each decoder upsampling.
    pub upsampled: Vec<[usize; 4]>,
    pub decoder: Vec<[usize; 4]>,
    /// `(decoder stage, encoder stage whose skip it consumed)`.
    pub skips: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct Unet {
    pub input: Conv3d,
    pub encoder: Vec<EncoderStage>,
    pub bottleneck: Vec<ConditionedBlock>,
    pub decoder: Vec<DecoderStage>,
    pub output: Conv3d,
    cfg: ModelConfig,
}

/// Nearest-neighbour `x2` spatial upsampling indices.
fn upsample_index([t, h, w, c]: [usize; 4]) -> Vec<usize> {
    let mut idx = Vec::with_capacity(t * 4 * h * w * c);
    for tt in 0..t {
        for y in 0..2 * h {
            for x in 0..2 * w {
                let base = ((tt * h + y / 2) * w + x / 2) * c;
                idx.extend(base..base + c);
            }
        }
    }
    idx
}

fn make_blocks(
    store: &mut ParamStore,
    rng: &mut impl Rng,
    cfg: &ModelConfig,
    prefix: &str,
    dim: usize,
    stage: usize,
) -> Vec<ConditionedBlock> {
    (0..cfg.blocks_per_stage)
        .map(|b| ConditionedBlock::new(store, rng, &format!("{prefix}.block{b}"), cfg, dim, stage))
        .collect()
}

impl Unet {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, cfg: &ModelConfig) -> Self {
        let k = cfg.stages;
        let ik = cfg.input_kernel;
        let concat = cfg.injection == Injection::Concat;
        let input = Conv3d::new(store, rng, "unet.input", 3, cfg.channels(0), Conv3dSpec::same([ik, ik, ik]));
        let down_spec = Conv3dSpec::new([1, 4, 4], [1, 2, 2], [0, 1, 1]);
        let encoder = (0..k)
            .map(|i| {
                let c = cfg.channels(i);
                let prefix = format!("unet.enc{i}");
                let stage_blocks = make_blocks(store, rng, cfg, &prefix, c, i);
                let ar = if concat && cfg.look_around.enabled { cfg.look_around.channels[i] } else { 0 };
                let down = Conv3d::new(store, rng, &format!("{prefix}.down"), c + ar + 1, cfg.channels(i + 1), down_spec);
                EncoderStage {
                    blocks: stage_blocks,
                    down,
                }
            })
            .collect();
        let bottleneck = make_blocks(store, rng, cfg, "unet.mid", cfg.channels(k), k);
        let decoder = (0..k)
            .map(|j| {
                let i = k - 1 - j;
                let c = cfg.channels(i);
                let prefix = format!("unet.dec{j}");
                let up = Conv3d::new(store, rng, &format!("{prefix}.up"), cfg.channels(i + 1), c, Conv3dSpec::same([1, 3, 3]));
                let ah = if concat && cfg.look_ahead.enabled { cfg.look_ahead.channels[i] } else { 0 };
                let fuse = Linear::new(store, rng, &format!("{prefix}.fuse"), 2 * c + ah + 1, c, true);
                DecoderStage {
                    up,
                    fuse,
                    blocks: make_blocks(store, rng, cfg, &prefix, c, i),
                }
            })
            .collect();
        let output = Conv3d::zeroed(store, "unet.output", cfg.channels(0), 3, Conv3dSpec::same([ik, ik, ik]));
        Self {
            input,
            encoder,
            bottleneck,
            decoder,
            output,
            cfg: cfg.clone(),
        }
    }

    fn check(g: &Graph, x: Var, stage: &str, tensor: &str, want: [usize; 4]) -> Result<()> {
        if dims_checked(g, x) != Some(want) {
            return Err(DiqpError::Shape {
                stage: stage.into(),
                tensor: tensor.into(),
                got: g.shape(x).to_vec(),
                want: want.to_vec(),
            });
        }
        Ok(())
    }

    /// `tiles[i]` is the conditioning tile `[T, side_i, side_i, 1]` for
    /// stage `i` (index `K` for the bottleneck). `ar` is in encoder order,
    /// `ah` in decoder order.
    pub fn forward(
        &self,
        g: &mut Graph,
        clip: Var,
        tiles: &[Var],
        ar: Option<&[Var]>,
        ah: Option<&[Var]>,
    ) -> Result<(Var, ShapeLedger)> {
        let cfg = &self.cfg;
        let (k, t) = (cfg.stages, cfg.clip_len);
        let plan = |i: usize| [t, cfg.side(i), cfg.side(i), cfg.channels(i)];
        Self::check(g, clip, "input", "window clip", [t, cfg.side(0), cfg.side(0), 3])?;
        if tiles.len() != k + 1 {
            return Err(DiqpError::Invalid(format!("expected {} conditioning tiles, got {}", k + 1, tiles.len())));
        }
        for (i, &tile) in tiles.iter().enumerate() {
            Self::check(g, tile, &format!("stage {i}"), "lost tile", [t, cfg.side(i), cfg.side(i), 1])?;
        }
        let aux_len = |p: Option<&[Var]>, name: &str| match p {
            Some(levels) if levels.len() != k => Err(DiqpError::Invalid(format!(
                "{name} has {} levels, expected {k}",
                levels.len()
            ))),
            _ => Ok(()),
        };
        aux_len(ar, "look-around pyramid")?;
        aux_len(ah, "look-ahead pyramid")?;

        let mut ledger = ShapeLedger::default();
        let x = self.input.forward(g, clip)?;
        let mut x = g.tape.activation(x, cfg.conv_activation());
        let mut skips = Vec::with_capacity(k);
        for (i, stage) in self.encoder.iter().enumerate() {
            for b in &stage.blocks {
                x = b.forward(g, x, tiles[i])?;
            }
            Self::check(g, x, &format!("encoder {i}"), "block output", plan(i))?;
            ledger.encoder.push(dims(g, x));
            skips.push(x);
            let mut y = x;
            if let Some(ar) = ar {
                let lc = cfg.look_around.channels[i];
                Self::check(g, ar[i], &format!("encoder {i}"), "look-around level", [t, cfg.side(i), cfg.side(i), lc])?;
                y = match cfg.injection {
                    Injection::Concat => g.tape.concat(&[y, ar[i]])?,
                    Injection::Add => g.tape.add(y, ar[i])?,
                };
            }
            let y = attach_lost(g, y, tiles[i])?;
            ledger.downsampled.push(dims(g, y));
            x = stage.down.forward(g, y)?;
        }
        for b in &self.bottleneck {
            x = b.forward(g, x, tiles[k])?;
        }
        Self::check(g, x, "bottleneck", "block output", plan(k))?;
        ledger.bottleneck = dims(g, x);
        for (j, stage) in self.decoder.iter().enumerate() {
            let i = k - 1 - j;
            let up_index = upsample_index(dims(g, x));
            let [_, h, w, c] = dims(g, x);
            let up = g.tape.gather(x, Arc::new(up_index), &[t, 2 * h, 2 * w, c])?;
            let up = stage.up.forward(g, up)?;
            Self::check(g, up, &format!("decoder {j}"), "upsampled", plan(i))?;
            ledger.upsampled.push(dims(g, up));
            let mut parts = vec![up, skips[i]];
            ledger.skips.push((j, i));
            let mut added = None;
            if let Some(ah) = ah {
                let lc = cfg.look_ahead.channels[i];
                Self::check(g, ah[j], &format!("decoder {j}"), "look-ahead level", [t, cfg.side(i), cfg.side(i), lc])?;
                match cfg.injection {
                    Injection::Concat => parts.push(ah[j]),
                    Injection::Add => added = Some(ah[j]),
                }
            }
            parts.push(tiles[i]);
            let y = g.tape.concat(&parts)?;
            x = stage.fuse.forward(g, y)?;
            if let Some(a) = added {
                x = g.tape.add(x, a)?;
            }
            for b in &stage.blocks {
                x = b.forward(g, x, tiles[i])?;
            }
            ledger.decoder.push(dims(g, x));
        }
        let out = self.output.forward(g, x)?;
        Ok((out, ledger))
    }
}

fn dims_checked(g: &Graph, x: Var) -> Option<[usize; 4]> {
    match *g.shape(x) {
        [a, b, c, d] => Some([a, b, c, d]),
        _ => None,
    }
}
