//! Operation tape for reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value and the handles of its
//! inputs. Inputs always precede their consumers, so the node order is a
//! topological order and the backward pass is a single reverse sweep that
//! visits each node once.

use std::sync::Arc;

use crate::activation::Activation;
use crate::conv::{self, Conv3dSpec};
use crate::error::{Result, TensorError};
use crate::linalg::{gemm, MatMut, MatRef};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    Act(Var, Activation),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Bmm {
        a: Var,
        b: Var,
        trans_a: bool,
        trans_b: bool,
    },
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        rstd: Vec<f64>,
    },
    Conv3d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: Conv3dSpec,
        cols: Vec<f64>,
        out: [usize; 3],
    },
    Depthwise {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: Conv3dSpec,
        out: [usize; 3],
    },
    Concat(Vec<Var>),
    Gather {
        x: Var,
        index: Arc<Vec<usize>>,
    },
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn thwc(op: &'static str, shape: &[usize]) -> Result<([usize; 3], usize)> {
    match *shape {
        [t, h, w, c] => Ok(([t, h, w], c)),
        _ => Err(TensorError::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("{op} expects a (T, H, W, C) input"),
        }),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(op, va.shape(), vb.shape()));
        }
        va.zip_map(vb, f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        self.push(value, Op::Sqrt(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean());
        self.push(value, Op::Mean(a), &[a])
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let value = self.value(a).map(|x| kind.apply(x));
        self.push(value, Op::Act(a, kind), &[a])
    }

    /// `x[..., in] @ w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        if vw.ndim() != 2 || vx.last_dim() != vw.shape()[0] {
            return Err(mismatch("linear", vx.shape(), vw.shape()));
        }
        let (din, dout) = (vw.shape()[0], vw.shape()[1]);
        let rows = vx.numel() / din;
        let mut out = vec![0.0; rows * dout];
        if let Some(b) = b {
            let vb = self.value(b);
            if vb.shape() != [dout] {
                return Err(mismatch("linear bias", vb.shape(), &[dout]));
            }
            for row in out.chunks_exact_mut(dout) {
                row.copy_from_slice(vb.data());
            }
        }
        gemm(
            MatRef::row_major(vx.data(), rows, din),
            MatRef::row_major(vw.data(), din, dout),
            MatMut::row_major(&mut out, rows, dout),
            if b.is_some() { 1.0 } else { 0.0 },
        );
        let mut shape = vx.shape().to_vec();
        *shape.last_mut().unwrap() = dout;
        let value = Tensor::new(shape, out)?;
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(value, Op::Linear { x, w, b }, &parents))
    }

    /// Batched matrix product over `[B, M, K] x [B, K, N]`, where either
    /// operand may be stored transposed (`[B, K, M]` / `[B, N, K]`).
    pub fn bmm(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch("bmm", sa, sb));
        }
        let (m, k) = if trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (k2, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != k2 {
            return Err(mismatch("bmm", sa, sb));
        }
        let batch = sa[0];
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            let ab = &va.data()[i * m * k..(i + 1) * m * k];
            let bb = &vb.data()[i * k * n..(i + 1) * k * n];
            gemm(
                mat_view(ab, m, k, trans_a),
                mat_view(bb, k, n, trans_b),
                MatMut::row_major(&mut out[i * m * n..(i + 1) * m * n], m, n),
                0.0,
            );
        }
        let value = Tensor::new(vec![batch, m, n], out)?;
        Ok(self.push(
            value,
            Op::Bmm {
                a,
                b,
                trans_a,
                trans_b,
            },
            &[a, b],
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let c = va.last_dim();
        let mut out = va.data().to_vec();
        for row in out.chunks_exact_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Softmax(a), &[a])
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let vx = self.value(x);
        let c = vx.last_dim();
        for (name, v) in [("layer_norm gamma", gamma), ("layer_norm beta", beta)] {
            if self.value(v).shape() != [c] {
                return Err(mismatch(name, self.value(v).shape(), &[c]));
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = vx.numel() / c;
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        let mut out = vec![0.0; vx.numel()];
        for (r, row) in vx.data().chunks_exact(c).enumerate() {
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + eps).sqrt();
            for (j, &v) in row.iter().enumerate() {
                out[r * c + j] = (v - mu) * rs * g[j] + b[j];
            }
            mean.push(mu);
            rstd.push(rs);
        }
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    /// Dense 3D convolution: `x: [T, H, W, Cin]`, `w: [kt, kh, kw, Cin, Cout]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, spec: Conv3dSpec) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        let (dims, cin) = thwc("conv3d", vx.shape())?;
        let ws = vw.shape();
        if ws.len() != 5 || ws[..3] != spec.kernel || ws[3] != cin {
            return Err(mismatch("conv3d", vx.shape(), ws));
        }
        let cout = ws[4];
        let bias = match b {
            Some(b) => {
                let vb = self.value(b);
                if vb.shape() != [cout] {
                    return Err(mismatch("conv3d bias", vb.shape(), &[cout]));
                }
                Some(vb.data())
            }
            None => None,
        };
        let (y, cols, out) = conv::conv3d_forward(vx.data(), dims, cin, vw.data(), bias, cout, &spec)?;
        let value = Tensor::new(vec![out[0], out[1], out[2], cout], y)?;
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(
            value,
            Op::Conv3d {
                x,
                w,
                b,
                spec,
                cols,
                out,
            },
            &parents,
        ))
    }

    /// Per-channel convolution, stride 1: `w: [kt, kh, kw, C]`.
    pub fn depthwise_conv3d(&mut self, x: Var, w: Var, b: Option<Var>, spec: Conv3dSpec) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        let (dims, c) = thwc("depthwise_conv3d", vx.shape())?;
        let ws = vw.shape();
        if ws.len() != 4 || ws[..3] != spec.kernel || ws[3] != c {
            return Err(mismatch("depthwise_conv3d", vx.shape(), ws));
        }
        let bias = match b {
            Some(b) => {
                let vb = self.value(b);
                if vb.shape() != [c] {
                    return Err(mismatch("depthwise_conv3d bias", vb.shape(), &[c]));
                }
                Some(vb.data())
            }
            None => None,
        };
        let (y, out) = conv::depthwise_forward(vx.data(), dims, c, vw.data(), bias, &spec)?;
        let value = Tensor::new(vec![out[0], out[1], out[2], c], y)?;
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(value, Op::Depthwise { x, w, b, spec, out }, &parents))
    }

    /// Concatenate along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_last(&values)?;
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// `out[i] = x[index[i]]`, reshaped to `shape`. Indices may repeat; the
    /// backward pass accumulates.
    pub fn gather(&mut self, x: Var, index: Arc<Vec<usize>>, shape: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= vx.numel()) {
            return Err(TensorError::Invalid(format!(
                "gather index {bad} out of range for {} elements",
                vx.numel()
            )));
        }
        let value = vx.gather(&index, shape)?;
        Ok(self.push(value, Op::Gather { x, index }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].take() else { continue };
            self.backprop(node, &g, lower);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let live = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if live(*a) {
                    accumulate(grads, *a, g.len(), |d| add_into(d, g));
                }
                if live(*b) {
                    accumulate(grads, *b, g.len(), |d| add_into(d, g));
                }
            }
            Op::Sub(a, b) => {
                if live(*a) {
                    accumulate(grads, *a, g.len(), |d| add_into(d, g));
                }
                if live(*b) {
                    accumulate(grads, *b, g.len(), |d| {
                        for (d, g) in d.iter_mut().zip(g) {
                            *d -= g;
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                if live(*a) {
                    accumulate(grads, *a, g.len(), |d| {
                        for ((d, g), y) in d.iter_mut().zip(g).zip(vb) {
                            *d += g * y;
                        }
                    });
                }
                if live(*b) {
                    accumulate(grads, *b, g.len(), |d| {
                        for ((d, g), x) in d.iter_mut().zip(g).zip(va) {
                            *d += g * x;
                        }
                    });
                }
            }
            Op::Scale(a, f) => accumulate(grads, *a, g.len(), |d| {
                for (d, g) in d.iter_mut().zip(g) {
                    *d += g * f;
                }
            }),
            Op::AddScalar(a) | Op::Reshape(a) => accumulate(grads, *a, g.len(), |d| add_into(d, g)),
            Op::Sqrt(a) => {
                let y = node.value.data();
                accumulate(grads, *a, g.len(), |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(y) {
                        *d += g * 0.5 / y;
                    }
                })
            }
            Op::Sum(a) => {
                let n = val(*a).numel();
                accumulate(grads, *a, n, |d| d.iter_mut().for_each(|d| *d += g[0]))
            }
            Op::Mean(a) => {
                let n = val(*a).numel();
                let s = g[0] / n as f64;
                accumulate(grads, *a, n, |d| d.iter_mut().for_each(|d| *d += s))
            }
            Op::Act(a, kind) => {
                let x = val(*a).data();
                accumulate(grads, *a, g.len(), |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(x) {
                        *d += g * kind.derivative(*x);
                    }
                })
            }
            Op::Linear { x, w, b } => {
                let (vx, vw) = (val(*x), val(*w));
                let (din, dout) = (vw.shape()[0], vw.shape()[1]);
                let rows = vx.numel() / din;
                let gm = MatRef::row_major(g, rows, dout);
                if live(*x) {
                    accumulate(grads, *x, rows * din, |d| {
                        gemm(
                            gm,
                            MatRef::row_major(vw.data(), din, dout).t(),
                            MatMut::row_major(d, rows, din),
                            1.0,
                        )
                    });
                }
                if live(*w) {
                    accumulate(grads, *w, din * dout, |d| {
                        gemm(
                            MatRef::row_major(vx.data(), rows, din).t(),
                            gm,
                            MatMut::row_major(d, din, dout),
                            1.0,
                        )
                    });
                }
                if let Some(b) = b.filter(|b| live(*b)) {
                    accumulate(grads, b, dout, |d| {
                        for row in g.chunks_exact(dout) {
                            add_into(d, row);
                        }
                    });
                }
            }
            Op::Bmm {
                a,
                b,
                trans_a,
                trans_b,
            } => {
                let (va, vb) = (val(*a), val(*b));
                let (sa, sb) = (va.shape(), vb.shape());
                let (m, k) = if *trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
                let n = if *trans_b { sb[1] } else { sb[2] };
                let batch = sa[0];
                if live(*a) {
                    accumulate(grads, *a, va.numel(), |d| {
                        for i in 0..batch {
                            let gb = MatRef::row_major(&g[i * m * n..(i + 1) * m * n], m, n);
                            let bb = mat_view(&vb.data()[i * k * n..(i + 1) * k * n], k, n, *trans_b);
                            gemm(gb, bb.t(), mat_out(&mut d[i * m * k..(i + 1) * m * k], m, k, *trans_a), 1.0);
                        }
                    });
                }
                if live(*b) {
                    accumulate(grads, *b, vb.numel(), |d| {
                        for i in 0..batch {
                            let gb = MatRef::row_major(&g[i * m * n..(i + 1) * m * n], m, n);
                            let ab = mat_view(&va.data()[i * m * k..(i + 1) * m * k], m, k, *trans_a);
                            gemm(ab.t(), gb, mat_out(&mut d[i * k * n..(i + 1) * k * n], k, n, *trans_b), 1.0);
                        }
                    });
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let c = node.value.last_dim();
                accumulate(grads, *a, g.len(), |d| {
                    for ((d, g), y) in d.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(y.chunks_exact(c)) {
                        let dot: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                        for j in 0..c {
                            d[j] += y[j] * (g[j] - dot);
                        }
                    }
                })
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => {
                let vx = val(*x);
                let c = vx.last_dim();
                let gam = val(*gamma).data();
                let xhat = |r: usize, j: usize| (vx.data()[r * c + j] - mean[r]) * rstd[r];
                if live(*x) {
                    accumulate(grads, *x, vx.numel(), |d| {
                        for (r, gr) in g.chunks_exact(c).enumerate() {
                            let mut m1 = 0.0;
                            let mut m2 = 0.0;
                            for j in 0..c {
                                let dxh = gr[j] * gam[j];
                                m1 += dxh;
                                m2 += dxh * xhat(r, j);
                            }
                            m1 /= c as f64;
                            m2 /= c as f64;
                            for j in 0..c {
                                let dxh = gr[j] * gam[j];
                                d[r * c + j] += rstd[r] * (dxh - m1 - xhat(r, j) * m2);
                            }
                        }
                    });
                }
                if live(*gamma) {
                    accumulate(grads, *gamma, c, |d| {
                        for (r, gr) in g.chunks_exact(c).enumerate() {
                            for j in 0..c {
                                d[j] += gr[j] * xhat(r, j);
                            }
                        }
                    });
                }
                if live(*beta) {
                    accumulate(grads, *beta, c, |d| {
                        for gr in g.chunks_exact(c) {
                            add_into(d, gr);
                        }
                    });
                }
            }
            Op::Conv3d {
                x,
                w,
                b,
                spec,
                cols,
                out,
            } => {
                let (vx, vw) = (val(*x), val(*w));
                let ([t, h, wd], cin) = thwc("conv3d", vx.shape()).expect("checked in forward");
                let cout = vw.shape()[4];
                let grads_c = conv::conv3d_backward(g, cols, vw.data(), [t, h, wd], cin, cout, spec, *out, live(*x));
                if let Some(dx) = grads_c.dx {
                    accumulate(grads, *x, dx.len(), |d| add_into(d, &dx));
                }
                if live(*w) {
                    accumulate(grads, *w, grads_c.dkernel.len(), |d| add_into(d, &grads_c.dkernel));
                }
                if let Some(b) = b.filter(|b| live(*b)) {
                    accumulate(grads, b, cout, |d| add_into(d, &grads_c.dbias));
                }
            }
            Op::Depthwise { x, w, b, spec, out } => {
                let (vx, vw) = (val(*x), val(*w));
                let (dims, c) = thwc("depthwise_conv3d", vx.shape()).expect("checked in forward");
                let gr = conv::depthwise_backward(g, vx.data(), vw.data(), dims, c, spec, *out, live(*x));
                if let Some(dx) = gr.dx {
                    accumulate(grads, *x, dx.len(), |d| add_into(d, &dx));
                }
                if live(*w) {
                    accumulate(grads, *w, gr.dkernel.len(), |d| add_into(d, &gr.dkernel));
                }
                if let Some(b) = b.filter(|b| live(*b)) {
                    accumulate(grads, b, c, |d| add_into(d, &gr.dbias));
                }
            }
            Op::Concat(parts) => {
                let total = node.value.last_dim();
                let rows = node.value.numel() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).last_dim();
                    if live(p) {
                        accumulate(grads, p, rows * w, |d| {
                            for r in 0..rows {
                                add_into(&mut d[r * w..(r + 1) * w], &g[r * total + offset..r * total + offset + w]);
                            }
                        });
                    }
                    offset += w;
                }
            }
            Op::Gather { x, index } => {
                let n = val(*x).numel();
                accumulate(grads, *x, n, |d| {
                    for (&i, g) in index.iter().zip(g) {
                        d[i] += g;
                    }
                })
            }
        }
    }
}

fn mat_view(data: &[f64], rows: usize, cols: usize, transposed: bool) -> MatRef<'_> {
    if transposed {
        MatRef::row_major(data, cols, rows).t()
    } else {
        MatRef::row_major(data, rows, cols)
    }
}

fn mat_out(data: &mut [f64], rows: usize, cols: usize, transposed: bool) -> MatMut<'_> {
    if transposed {
        MatMut::transposed(data, rows, cols)
    } else {
        MatMut::row_major(data, rows, cols)
    }
}

fn add_into(d: &mut [f64], g: &[f64]) {
    for (d, g) in d.iter_mut().zip(g) {
        *d += g;
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
}

/// Gradients produced by [`Tape::backward`]; only leaves keep theirs.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v` as a tensor shaped like its value; zero when `v` is
    /// not on a path to the loss.
    pub fn tensor(&self, tape: &Tape, v: Var) -> Tensor {
        let shape = tape.shape(v);
        match self.get(v) {
            Some(g) => Tensor::new(shape.to_vec(), g.to_vec()).expect("gradient matches value shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// `dloss / dparam` for each of `params`.
pub fn grad(tape: &Tape, loss: Var, params: &[Var]) -> Result<Vec<Tensor>> {
    let grads = tape.backward(loss)?;
    Ok(params.iter().map(|&p| grads.tensor(tape, p)).collect())
}
