//! Non-overlapping spatio-temporal window partitioning.
//!
//! A `(T, H, W, C)` tensor is cut into windows of `(wt, wh, ww)` voxels.
//! Windows are ordered row-major over the window grid and voxels inside a
//! window row-major over `(t, h, w)`. All maps here are index permutations,
//! so partition and merge are exact inverses.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

const AXES: [&str; 3] = ["temporal", "height", "width"];

/// Window grid `(T/wt, H/wh, W/ww)`, or an error naming the offending axis.
pub fn window_grid(dims: [usize; 3], win: [usize; 3]) -> Result<[usize; 3]> {
    let mut grid = [0; 3];
    for a in 0..3 {
        if win[a] == 0 || dims[a] % win[a] != 0 {
            return Err(TensorError::NotDivisible {
                op: "window_partition",
                axis: AXES[a],
                size: dims[a],
                window: win[a],
            });
        }
        grid[a] = dims[a] / win[a];
    }
    Ok(grid)
}

pub fn window_count(dims: [usize; 3], win: [usize; 3]) -> Result<usize> {
    Ok(window_grid(dims, win)?.iter().product())
}

/// `order[j]` is the `(t, h, w)` voxel index of the `j`-th voxel in window order.
pub fn window_token_order(dims: [usize; 3], win: [usize; 3]) -> Result<Vec<usize>> {
    let grid = window_grid(dims, win)?;
    let mut order = Vec::with_capacity(dims.iter().product());
    for gt in 0..grid[0] {
        for gh in 0..grid[1] {
            for gw in 0..grid[2] {
                for it in 0..win[0] {
                    for ih in 0..win[1] {
                        for iw in 0..win[2] {
                            let t = gt * win[0] + it;
                            let h = gh * win[1] + ih;
                            let w = gw * win[2] + iw;
                            order.push((t * dims[1] + h) * dims[2] + w);
                        }
                    }
                }
            }
        }
    }
    Ok(order)
}

/// Gather index taking `[T, H, W, C]` to `[nWin, wt, wh, ww, C]`.
pub fn partition_index(dims: [usize; 3], c: usize, win: [usize; 3]) -> Result<Vec<usize>> {
    let order = window_token_order(dims, win)?;
    Ok(order
        .iter()
        .flat_map(|&tok| (0..c).map(move |ch| tok * c + ch))
        .collect())
}

/// Gather index taking `[nWin, wt, wh, ww, C]` back to `[T, H, W, C]`.
pub fn merge_index(dims: [usize; 3], c: usize, win: [usize; 3]) -> Result<Vec<usize>> {
    let order = window_token_order(dims, win)?;
    let mut index = vec![0; order.len() * c];
    for (j, &tok) in order.iter().enumerate() {
        for ch in 0..c {
            index[tok * c + ch] = j * c + ch;
        }
    }
    Ok(index)
}

fn thwc(x: &Tensor) -> Result<([usize; 3], usize)> {
    match *x.shape() {
        [t, h, w, c] => Ok(([t, h, w], c)),
        _ => Err(TensorError::InvalidShape {
            shape: x.shape().to_vec(),
            reason: "expected a (T, H, W, C) tensor".into(),
        }),
    }
}

pub fn window_partition(x: &Tensor, win: [usize; 3]) -> Result<Tensor> {
    let (dims, c) = thwc(x)?;
    let n = window_count(dims, win)?;
    let index = partition_index(dims, c, win)?;
    x.gather(&index, &[n, win[0], win[1], win[2], c])
}

pub fn window_merge(windows: &Tensor, dims: [usize; 3], win: [usize; 3]) -> Result<Tensor> {
    let n = window_count(dims, win)?;
    let c = windows.last_dim();
    let expect = [n, win[0], win[1], win[2], c];
    if windows.shape() != expect {
        return Err(TensorError::ShapeMismatch {
            op: "window_merge",
            lhs: windows.shape().to_vec(),
            rhs: expect.to_vec(),
        });
    }
    let index = merge_index(dims, c, win)?;
    windows.gather(&index, &[dims[0], dims[1], dims[2], c])
}

/// Layout maps for multi-head attention inside windows.
///
/// `split(offset)` gathers channels `offset + head * head_dim + d` of a
/// `[T, H, W, stride]` tensor into `[nWin * heads, N, head_dim]`; `merge`
/// takes `[nWin * heads, N, head_dim]` back to `[T, H, W, heads * head_dim]`.
#[derive(Clone, Debug)]
pub struct HeadLayout {
    order: Vec<usize>,
    pub windows: usize,
    pub tokens: usize,
    pub heads: usize,
    pub head_dim: usize,
}

impl HeadLayout {
    pub fn new(dims: [usize; 3], win: [usize; 3], heads: usize, head_dim: usize) -> Result<Self> {
        let order = window_token_order(dims, win)?;
        Ok(Self {
            order,
            windows: window_count(dims, win)?,
            tokens: win.iter().product(),
            heads,
            head_dim,
        })
    }

    pub fn split_shape(&self) -> [usize; 3] {
        [self.windows * self.heads, self.tokens, self.head_dim]
    }

    pub fn split_index(&self, stride: usize, offset: usize) -> Vec<usize> {
        let mut index = Vec::with_capacity(self.order.len() * self.heads * self.head_dim);
        for w in 0..self.windows {
            for h in 0..self.heads {
                for n in 0..self.tokens {
                    let tok = self.order[w * self.tokens + n];
                    let base = tok * stride + offset + h * self.head_dim;
                    index.extend(base..base + self.head_dim);
                }
            }
        }
        index
    }

    pub fn merge_index(&self) -> Vec<usize> {
        let d = self.heads * self.head_dim;
        let mut index = vec![0; self.order.len() * d];
        for (j, &tok) in self.order.iter().enumerate() {
            let (w, n) = (j / self.tokens, j % self.tokens);
            for h in 0..self.heads {
                for k in 0..self.head_dim {
                    index[tok * d + h * self.head_dim + k] =
                        ((w * self.heads + h) * self.tokens + n) * self.head_dim + k;
                }
            }
        }
        index
    }
}
