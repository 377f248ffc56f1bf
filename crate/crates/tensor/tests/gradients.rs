//! Every differentiable op against central finite differences (h = 1e-5).

use std::sync::Arc;

use diqp_tensor::gradcheck::check_gradients;
use diqp_tensor::{grad, window, Activation, Conv3dSpec, Result, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand(shape: &[usize], seed: u64) -> Tensor {
    Tensor::rand_uniform(shape, -2.0, 2.0, &mut rng(seed))
}

/// Random projection to a scalar so every output element carries a
/// distinct sensitivity.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let w = rand(tape.shape(y), seed ^ 0x5eed);
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn assert_passes(name: &str, inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) {
    let report = check_gradients(inputs, f, H).unwrap();
    assert!(
        report.passes(TOL),
        "{name}: max relative error {:.3e} at {:?}",
        report.max_rel_error,
        report.worst
    );
    assert!(report.checked > 0);
}

#[test]
fn analytic_examples() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq);
    let g = grad(&tape, loss, &[x]).unwrap();
    assert_eq!(g[0].data(), &[2.0, -4.0]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
    let c = tape.constant(Tensor::full(&[3], 4.0));
    let loss = tape.sum(c);
    let g = grad(&tape, loss, &[x]).unwrap();
    assert_eq!(g[0].data(), &[0.0, 0.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2, 2]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn elementwise_ops() {
    let a = rand(&[3, 4], 1);
    let b = rand(&[3, 4], 2);
    assert_passes("add", &[a.clone(), b.clone()], |t, v| {
        let y = t.add(v[0], v[1])?;
        project(t, y, 1)
    });
    assert_passes("sub", &[a.clone(), b.clone()], |t, v| {
        let y = t.sub(v[0], v[1])?;
        project(t, y, 2)
    });
    assert_passes("mul", &[a.clone(), b.clone()], |t, v| {
        let y = t.mul(v[0], v[1])?;
        project(t, y, 3)
    });
    assert_passes("scale/add_scalar", &[a.clone()], |t, v| {
        let y = t.scale(v[0], -1.7);
        let y = t.add_scalar(y, 0.3);
        project(t, y, 4)
    });
    assert_passes("sqrt", &[a.map(|x| x.abs() + 0.5)], |t, v| {
        let y = t.sqrt(v[0]);
        project(t, y, 5)
    });
    assert_passes("mean", &[a.clone()], |t, v| {
        let y = t.mul(v[0], v[0])?;
        Ok(t.mean(y))
    });
    assert_passes("reshape", &[a.clone()], |t, v| {
        let y = t.reshape(v[0], &[2, 6])?;
        project(t, y, 6)
    });
}

#[test]
fn activations() {
    let x = rand(&[5, 6], 11);
    for kind in [Activation::Silu, Activation::LeakyRelu(0.01), Activation::Gelu] {
        assert_passes(&format!("{kind:?}"), &[x.clone()], move |t, v| {
            let y = t.activation(v[0], kind);
            project(t, y, 12)
        });
    }
}

#[test]
fn linear_and_bmm() {
    let x = rand(&[2, 3, 4], 21);
    let w = rand(&[4, 5], 22);
    let b = rand(&[5], 23);
    assert_passes("linear", &[x, w, b], |t, v| {
        let y = t.linear(v[0], v[1], Some(v[2]))?;
        project(t, y, 24)
    });
    for (ta, tb) in [(false, false), (false, true), (true, false), (true, true)] {
        let a = if ta { rand(&[2, 4, 3], 25) } else { rand(&[2, 3, 4], 25) };
        let b = if tb { rand(&[2, 5, 4], 26) } else { rand(&[2, 4, 5], 26) };
        assert_passes(&format!("bmm {ta} {tb}"), &[a, b], move |t, v| {
            let y = t.bmm(v[0], v[1], ta, tb)?;
            project(t, y, 27)
        });
    }
}

#[test]
fn softmax_and_layer_norm() {
    let x = rand(&[4, 7], 31);
    assert_passes("softmax", &[x.clone()], |t, v| {
        let y = t.softmax(v[0]);
        project(t, y, 32)
    });
    let g = rand(&[7], 33);
    let b = rand(&[7], 34);
    assert_passes("layer_norm", &[x, g, b], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
        project(t, y, 35)
    });
}

#[test]
fn convolutions() {
    let x = rand(&[3, 5, 4, 2], 41);
    let k = rand(&[3, 3, 3, 2, 3], 42);
    let b = rand(&[3], 43);
    assert_passes("conv3d same", &[x.clone(), k, b], |t, v| {
        let y = t.conv3d(v[0], v[1], Some(v[2]), Conv3dSpec::same([3, 3, 3]))?;
        project(t, y, 44)
    });
    let k = rand(&[1, 4, 4, 2, 3], 45);
    assert_passes("conv3d strided", &[x.clone(), k], |t, v| {
        let y = t.conv3d(v[0], v[1], None, Conv3dSpec::new([1, 4, 4], [1, 2, 2], [0, 1, 1]))?;
        project(t, y, 46)
    });
    let k = rand(&[1, 3, 3, 2], 47);
    let b = rand(&[2], 48);
    assert_passes("depthwise", &[x, k, b], |t, v| {
        let y = t.depthwise_conv3d(v[0], v[1], Some(v[2]), Conv3dSpec::same([1, 3, 3]))?;
        project(t, y, 49)
    });
}

#[test]
fn structural_ops() {
    let a = rand(&[2, 2, 4, 3], 51);
    let b = rand(&[2, 2, 4, 2], 52);
    assert_passes("concat", &[a.clone(), b], |t, v| {
        let y = t.concat(&[v[0], v[1]])?;
        project(t, y, 53)
    });
    let index = Arc::new(window::partition_index([2, 2, 4], 3, [1, 2, 2]).unwrap());
    assert_passes("window partition", &[a.clone()], move |t, v| {
        let y = t.gather(v[0], index.clone(), &[4, 1, 2, 2, 3])?;
        project(t, y, 54)
    });
    // Repeated indices (nearest upsampling style) must accumulate.
    let repeat = Arc::new(vec![0, 0, 1, 5, 5, 5, 2]);
    assert_passes("gather with repeats", &[rand(&[6], 55)], move |t, v| {
        let y = t.gather(v[0], repeat.clone(), &[7])?;
        project(t, y, 56)
    });
}

#[test]
fn attention_composite() {
    // qkv projection -> head split -> scores -> softmax -> weighted sum -> merge.
    let x = rand(&[1, 2, 4, 4], 61);
    let w = rand(&[4, 12], 62).map(|v| v * 0.5);
    let layout = diqp_tensor::HeadLayout::new([1, 2, 4], [1, 2, 2], 2, 2).unwrap();
    let q_idx = Arc::new(layout.split_index(12, 0));
    let k_idx = Arc::new(layout.split_index(12, 4));
    let v_idx = Arc::new(layout.split_index(12, 8));
    let m_idx = Arc::new(layout.merge_index());
    let shape = layout.split_shape();
    assert_passes("attention", &[x, w], move |t, v| {
        let qkv = t.linear(v[0], v[1], None)?;
        let q = t.gather(qkv, q_idx.clone(), &shape)?;
        let k = t.gather(qkv, k_idx.clone(), &shape)?;
        let vv = t.gather(qkv, v_idx.clone(), &shape)?;
        let s = t.bmm(q, k, false, true)?;
        let s = t.scale(s, 1.0 / 2f64.sqrt());
        let p = t.softmax(s);
        let o = t.bmm(p, vv, false, false)?;
        let y = t.gather(o, m_idx.clone(), &[1, 2, 4, 4])?;
        project(t, y, 63)
    });
}
