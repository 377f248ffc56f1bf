//! Channels-last 3D convolution kernels (zero padding, cross-correlation).
//!
//! Dense convolution lowers to GEMM through an im2col buffer whose column
//! order `(kt, kh, kw, cin)` matches the flattened kernel layout
//! `[kt, kh, kw, cin, cout]`, so the kernel is used as a `K x cout` matrix
//! without copying.

use crate::error::{Result, TensorError};
use crate::linalg::{gemm, MatMut, MatRef};

/// Kernel, stride and zero-padding per `(T, H, W)` axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

const AXES: [&str; 3] = ["temporal", "height", "width"];

impl Conv3dSpec {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    /// Stride 1 with `k / 2` padding, which keeps odd-sized inputs in place.
    pub fn same(kernel: [usize; 3]) -> Self {
        Self::new(kernel, [1; 3], [kernel[0] / 2, kernel[1] / 2, kernel[2] / 2])
    }

    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    /// `floor((in + 2p - k) / s) + 1` per axis.
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if self.kernel[a] == 0 || self.stride[a] == 0 {
                return Err(TensorError::Invalid(format!(
                    "conv3d: zero kernel or stride on the {} axis",
                    AXES[a]
                )));
            }
            if self.kernel[a] > padded {
                return Err(TensorError::Invalid(format!(
                    "conv3d: kernel {:?} exceeds padded input {:?} on the {} axis",
                    self.kernel,
                    [
                        input[0] + 2 * self.padding[0],
                        input[1] + 2 * self.padding[1],
                        input[2] + 2 * self.padding[2]
                    ],
                    AXES[a]
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

/// Input coordinate for output index `o` and tap `d`, if inside the tensor.
#[inline]
fn source(o: usize, d: usize, stride: usize, pad: usize, size: usize) -> Option<usize> {
    let pos = (o * stride + d) as isize - pad as isize;
    (pos >= 0 && (pos as usize) < size).then_some(pos as usize)
}

/// Lower `x: [T, H, W, cin]` to a `[N_out, taps * cin]` patch matrix.
pub fn im2col(x: &[f64], dims: [usize; 3], cin: usize, spec: &Conv3dSpec, out: [usize; 3]) -> Vec<f64> {
    let [kt, kh, kw] = spec.kernel;
    let width = kt * kh * kw * cin;
    let n = out[0] * out[1] * out[2];
    let mut cols = vec![0.0; n * width];
    let mut row = 0;
    for ot in 0..out[0] {
        for oh in 0..out[1] {
            for ow in 0..out[2] {
                let dst = &mut cols[row * width..(row + 1) * width];
                let mut col = 0;
                for dt in 0..kt {
                    let it = source(ot, dt, spec.stride[0], spec.padding[0], dims[0]);
                    for dh in 0..kh {
                        let ih = source(oh, dh, spec.stride[1], spec.padding[1], dims[1]);
                        for dw in 0..kw {
                            let iw = source(ow, dw, spec.stride[2], spec.padding[2], dims[2]);
                            if let (Some(it), Some(ih), Some(iw)) = (it, ih, iw) {
                                let src = ((it * dims[1] + ih) * dims[2] + iw) * cin;
                                dst[col..col + cin].copy_from_slice(&x[src..src + cin]);
                            }
                            col += cin;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back onto the input.
pub fn col2im(cols: &[f64], dims: [usize; 3], cin: usize, spec: &Conv3dSpec, out: [usize; 3]) -> Vec<f64> {
    let [kt, kh, kw] = spec.kernel;
    let width = kt * kh * kw * cin;
    let mut dx = vec![0.0; dims[0] * dims[1] * dims[2] * cin];
    let mut row = 0;
    for ot in 0..out[0] {
        for oh in 0..out[1] {
            for ow in 0..out[2] {
                let src_row = &cols[row * width..(row + 1) * width];
                let mut col = 0;
                for dt in 0..kt {
                    let it = source(ot, dt, spec.stride[0], spec.padding[0], dims[0]);
                    for dh in 0..kh {
                        let ih = source(oh, dh, spec.stride[1], spec.padding[1], dims[1]);
                        for dw in 0..kw {
                            let iw = source(ow, dw, spec.stride[2], spec.padding[2], dims[2]);
                            if let (Some(it), Some(ih), Some(iw)) = (it, ih, iw) {
                                let dst = ((it * dims[1] + ih) * dims[2] + iw) * cin;
                                for (d, s) in dx[dst..dst + cin].iter_mut().zip(&src_row[col..col + cin]) {
                                    *d += s;
                                }
                            }
                            col += cin;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    dx
}

/// Forward dense convolution. Returns `(output, cols)`; the patch matrix is
/// kept for the backward pass.
pub fn conv3d_forward(
    x: &[f64],
    dims: [usize; 3],
    cin: usize,
    kernel: &[f64],
    bias: Option<&[f64]>,
    cout: usize,
    spec: &Conv3dSpec,
) -> Result<(Vec<f64>, Vec<f64>, [usize; 3])> {
    let out = spec.output_dims(dims)?;
    let n = out[0] * out[1] * out[2];
    let k = spec.taps() * cin;
    let cols = im2col(x, dims, cin, spec, out);
    let mut y = vec![0.0; n * cout];
    if let Some(b) = bias {
        for row in y.chunks_exact_mut(cout) {
            row.copy_from_slice(b);
        }
    }
    gemm(
        MatRef::row_major(&cols, n, k),
        MatRef::row_major(kernel, k, cout),
        MatMut::row_major(&mut y, n, cout),
        if bias.is_some() { 1.0 } else { 0.0 },
    );
    Ok((y, cols, out))
}

/// Gradients of a dense convolution given the upstream gradient `dy`.
pub struct Conv3dGrads {
    pub dx: Option<Vec<f64>>,
    pub dkernel: Vec<f64>,
    pub dbias: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn conv3d_backward(
    dy: &[f64],
    cols: &[f64],
    kernel: &[f64],
    dims: [usize; 3],
    cin: usize,
    cout: usize,
    spec: &Conv3dSpec,
    out: [usize; 3],
    need_dx: bool,
) -> Conv3dGrads {
    let n = out[0] * out[1] * out[2];
    let k = spec.taps() * cin;
    let mut dkernel = vec![0.0; k * cout];
    gemm(
        MatRef::row_major(cols, n, k).t(),
        MatRef::row_major(dy, n, cout),
        MatMut::row_major(&mut dkernel, k, cout),
        0.0,
    );
    let mut dbias = vec![0.0; cout];
    for row in dy.chunks_exact(cout) {
        for (d, g) in dbias.iter_mut().zip(row) {
            *d += g;
        }
    }
    let dx = need_dx.then(|| {
        let mut dcols = vec![0.0; n * k];
        gemm(
            MatRef::row_major(dy, n, cout),
            MatRef::row_major(kernel, k, cout).t(),
            MatMut::row_major(&mut dcols, n, k),
            0.0,
        );
        col2im(&dcols, dims, cin, spec, out)
    });
    Conv3dGrads { dx, dkernel, dbias }
}

/// Depthwise convolution, stride 1: `kernel: [kt, kh, kw, C]`, one filter per channel.
pub fn depthwise_forward(
    x: &[f64],
    dims: [usize; 3],
    c: usize,
    kernel: &[f64],
    bias: Option<&[f64]>,
    spec: &Conv3dSpec,
) -> Result<(Vec<f64>, [usize; 3])> {
    if spec.stride != [1; 3] {
        return Err(TensorError::Invalid("depthwise conv supports stride 1 only".into()));
    }
    let out = spec.output_dims(dims)?;
    let [kt, kh, kw] = spec.kernel;
    let mut y = vec![0.0; out[0] * out[1] * out[2] * c];
    for ot in 0..out[0] {
        for oh in 0..out[1] {
            for ow in 0..out[2] {
                let o = ((ot * out[1] + oh) * out[2] + ow) * c;
                let dst = &mut y[o..o + c];
                if let Some(b) = bias {
                    dst.copy_from_slice(b);
                }
                for dt in 0..kt {
                    let Some(it) = source(ot, dt, 1, spec.padding[0], dims[0]) else { continue };
                    for dh in 0..kh {
                        let Some(ih) = source(oh, dh, 1, spec.padding[1], dims[1]) else { continue };
                        for dw in 0..kw {
                            let Some(iw) = source(ow, dw, 1, spec.padding[2], dims[2]) else { continue };
                            let xi = ((it * dims[1] + ih) * dims[2] + iw) * c;
                            let ki = ((dt * kh + dh) * kw + dw) * c;
                            for ((d, xv), kv) in dst.iter_mut().zip(&x[xi..xi + c]).zip(&kernel[ki..ki + c]) {
                                *d += xv * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((y, out))
}

pub struct DepthwiseGrads {
    pub dx: Option<Vec<f64>>,
    pub dkernel: Vec<f64>,
    pub dbias: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn depthwise_backward(
    dy: &[f64],
    x: &[f64],
    kernel: &[f64],
    dims: [usize; 3],
    c: usize,
    spec: &Conv3dSpec,
    out: [usize; 3],
    need_dx: bool,
) -> DepthwiseGrads {
    let [kt, kh, kw] = spec.kernel;
    let mut dkernel = vec![0.0; kernel.len()];
    let mut dbias = vec![0.0; c];
    let mut dx = need_dx.then(|| vec![0.0; x.len()]);
    for ot in 0..out[0] {
        for oh in 0..out[1] {
            for ow in 0..out[2] {
                let o = ((ot * out[1] + oh) * out[2] + ow) * c;
                let g = &dy[o..o + c];
                for (d, gv) in dbias.iter_mut().zip(g) {
                    *d += gv;
                }
                for dt in 0..kt {
                    let Some(it) = source(ot, dt, 1, spec.padding[0], dims[0]) else { continue };
                    for dh in 0..kh {
                        let Some(ih) = source(oh, dh, 1, spec.padding[1], dims[1]) else { continue };
                        for dw in 0..kw {
                            let Some(iw) = source(ow, dw, 1, spec.padding[2], dims[2]) else { continue };
                            let xi = ((it * dims[1] + ih) * dims[2] + iw) * c;
                            let ki = ((dt * kh + dh) * kw + dw) * c;
                            for ch in 0..c {
                                dkernel[ki + ch] += g[ch] * x[xi + ch];
                            }
                            if let Some(dx) = dx.as_mut() {
                                for ch in 0..c {
                                    dx[xi + ch] += g[ch] * kernel[ki + ch];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    DepthwiseGrads { dx, dkernel, dbias }
}
