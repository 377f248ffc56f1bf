//! Location and step (QP) conditioning: six scalars embedded, mixed by a
//! small SiLU network into an `l x l` map, then replicated to any stage side.

use std::sync::Arc;

use diqp_tensor::{Activation, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{DiqpError, Result};
use crate::nn::{Embedding, Graph, Linear, ParamStore};

/// The six conditioning scalars of one training window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalInfo {
    pub qp: u32,
    /// Index of the middle frame of the 3-frame input within the whole clip.
    pub middle_frame: usize,
    /// Window top-left `(h, w)` in original frame pixels.
    pub crop_orig: [usize; 2],
    /// The same corner in downscaled frame pixels.
    pub crop_down: [usize; 2],
}

impl ConditionalInfo {
    pub fn new(qp: u32, middle_frame: usize, crop_orig: [usize; 2], orig: [usize; 2], down: [usize; 2]) -> Result<Self> {
        Ok(Self {
            qp,
            middle_frame,
            crop_orig,
            crop_down: scale_crop_point(crop_orig, orig, down)?,
        })
    }
}

/// `floor(crop * down / orig)` per axis.
pub fn scale_crop_point(crop: [usize; 2], orig: [usize; 2], down: [usize; 2]) -> Result<[usize; 2]> {
    let mut out = [0; 2];
    for a in 0..2 {
        if orig[a] == 0 || down[a] == 0 {
            return Err(DiqpError::Invalid(format!(
                "cannot scale crop point between sizes {orig:?} and {down:?}"
            )));
        }
        if crop[a] >= orig[a] {
            return Err(DiqpError::Invalid(format!(
                "crop point {crop:?} lies outside a frame of {orig:?}"
            )));
        }
        out[a] = (crop[a] as u128 * down[a] as u128 / orig[a] as u128) as usize;
    }
    Ok(out)
}

/// Indices replicating an `l x l` map into `[t, side, side, 1]` with constant
/// `k x k` blocks, `k = side / l`.
pub fn tile_index(l: usize, side: usize, t: usize) -> Result<Vec<usize>> {
    if l == 0 || side % l != 0 {
        return Err(DiqpError::Invalid(format!("tile side {side} is not a multiple of {l}")));
    }
    let k = side / l;
    let plane: Vec<usize> = (0..side * side).map(|p| (p / side / k) * l + (p % side) / k).collect();
    Ok(plane.iter().copied().cycle().take(t * side * side).collect())
}

#[derive(Clone, Debug)]
pub struct Lost {
    tables: [Embedding; 6],
    hidden: Linear,
    out: Linear,
    pub base_side: usize,
}

impl Lost {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, cfg: &ModelConfig) -> Self {
        let l = &cfg.lost;
        let down = cfg.down_size();
        let vocab: [(&'static str, usize); 6] = [
            ("qp", l.qp_max as usize + 1),
            ("middle_frame", l.max_frames),
            ("crop_orig_h", l.frame_size[0]),
            ("crop_orig_w", l.frame_size[1]),
            ("crop_down_h", down[0]),
            ("crop_down_w", down[1]),
        ];
        let tables = vocab.map(|(field, n)| Embedding::new(store, rng, &format!("lost.{field}"), field, n, l.embed_dim));
        let hidden = Linear::new(store, rng, "lost.mix0", 6 * l.embed_dim, l.hidden, true);
        let out = Linear::new(store, rng, "lost.mix1", l.hidden, l.base_side * l.base_side, true);
        Self {
            tables,
            hidden,
            out,
            base_side: l.base_side,
        }
    }

    /// The mixed `l * l` vector.
    pub fn base(&self, g: &mut Graph, info: &ConditionalInfo) -> Result<Var> {
        let values = [
            info.qp as usize,
            info.middle_frame,
            info.crop_orig[0],
            info.crop_orig[1],
            info.crop_down[0],
            info.crop_down[1],
        ];
        let mut parts = Vec::with_capacity(6);
        for (table, v) in self.tables.iter().zip(values) {
            parts.push(table.forward(g, v)?);
        }
        let e = g.tape.concat(&parts)?;
        let h = self.hidden.forward(g, e)?;
        let h = g.tape.activation(h, Activation::Silu);
        self.out.forward(g, h)
    }

    /// Tile `base` to `[t, side, side, 1]`.
    pub fn tile(&self, g: &mut Graph, base: Var, side: usize, t: usize) -> Result<Var> {
        let index = tile_index(self.base_side, side, t)?;
        Ok(g.tape.gather(base, Arc::new(index), &[t, side, side, 1])?)
    }

    /// The conditioning map as `[1, side, side]`.
    pub fn embed(&self, g: &mut Graph, info: &ConditionalInfo, side: usize) -> Result<Var> {
        let base = self.base(g, info)?;
        let index = tile_index(self.base_side, side, 1)?;
        Ok(g.tape.gather(base, Arc::new(index), &[1, side, side])?)
    }
}

/// Channel-wise concatenation of a `[T, H, W, C]` map and a `[T, H, W, 1]` tile.
pub fn attach_lost(g: &mut Graph, features: Var, tile: Var) -> Result<Var> {
    let (fs, ts) = (g.shape(features).to_vec(), g.shape(tile).to_vec());
    if fs.len() != 4 || ts.len() != 4 || fs[..3] != ts[..3] || ts[3] != 1 {
        return Err(DiqpError::Shape {
            stage: "lost".into(),
            tensor: "tile".into(),
            got: ts,
            want: vec![*fs.first().unwrap_or(&0), *fs.get(1).unwrap_or(&0), *fs.get(2).unwrap_or(&0), 1],
        });
    }
    Ok(g.tape.concat(&[features, tile])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_scaling_examples() {
        assert_eq!(scale_crop_point([3840, 0], [7680, 4320], [512, 512]).unwrap(), [256, 0]);
        assert_eq!(scale_crop_point([7679, 4319], [7680, 4320], [512, 512]).unwrap(), [511, 511]);
        assert!(scale_crop_point([0, 0], [0, 4], [2, 2]).is_err());
    }

    #[test]
    fn tile_blocks_are_constant() {
        let idx = tile_index(2, 4, 2).unwrap();
        let plane = [0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3];
        assert_eq!(&idx[..16], &plane);
        assert_eq!(&idx[16..], &plane);
        assert!(tile_index(3, 8, 1).is_err());
    }
}
