//! Named parameter storage and the layer primitives the model is built from.

use std::collections::HashMap;
use std::sync::Arc;

use diqp_tensor::{Activation, Conv3dSpec, Tape, Tensor, Var};
use rand::Rng;

use crate::error::{DiqpError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat, ordered list of named parameter tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.lookup.contains_key(&name), "duplicate parameter name {name}");
        self.lookup.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar entries.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }
}

/// One forward pass: a tape plus lazily bound parameter leaves.
pub struct Graph<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    trainable: bool,
}

impl<'a> Graph<'a> {
    /// `trainable == false` binds parameters as constants (inference).
    pub fn new(store: &'a ParamStore, trainable: bool) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            trainable,
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let value = self.store.get(id).clone();
        let v = self.tape.leaf(value, self.trainable);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.tape.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.tape.shape(v)
    }

    /// Gradients for every parameter; unused ones are zero.
    pub fn param_grads(&self, loss: Var) -> Result<Vec<Tensor>> {
        let mut grads = self.tape.backward(loss)?;
        Ok(self
            .store
            .ids()
            .map(|id| match self.bound[id.0].and_then(|v| grads.take(v)) {
                Some(g) => Tensor::new(self.store.get(id).shape().to_vec(), g).expect("gradient shape"),
                None => Tensor::zeros(self.store.get(id).shape()),
            })
            .collect())
    }
}

fn uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::rand_uniform(shape, -bound, bound, rng)
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, din: usize, dout: usize, bias: bool) -> Self {
        let w = store.add(format!("{name}.weight"), uniform(&[din, dout], din, rng));
        let b = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[dout])));
        Self { w, b, din, dout }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = self.b.map(|b| g.param(b));
        Ok(g.tape.linear(x, w, b)?)
    }
}

#[derive(Clone, Debug)]
pub struct Conv3d {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv3dSpec,
    pub cin: usize,
    pub cout: usize,
}

impl Conv3d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        cin: usize,
        cout: usize,
        spec: Conv3dSpec,
    ) -> Self {
        let [kt, kh, kw] = spec.kernel;
        let w = store.add(format!("{name}.weight"), uniform(&[kt, kh, kw, cin, cout], spec.taps() * cin, rng));
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Self { w, b, spec, cin, cout }
    }

    /// A convolution whose weights and bias start at zero.
    pub fn zeroed(store: &mut ParamStore, name: &str, cin: usize, cout: usize, spec: Conv3dSpec) -> Self {
        let [kt, kh, kw] = spec.kernel;
        let w = store.add(format!("{name}.weight"), Tensor::zeros(&[kt, kh, kw, cin, cout]));
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Self { w, b, spec, cin, cout }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        Ok(g.tape.conv3d(x, w, Some(b), self.spec)?)
    }
}

#[derive(Clone, Debug)]
pub struct Depthwise {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv3dSpec,
}

impl Depthwise {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, channels: usize, kernel: [usize; 3]) -> Self {
        let spec = Conv3dSpec::same(kernel);
        let w = store.add(
            format!("{name}.weight"),
            uniform(&[kernel[0], kernel[1], kernel[2], channels], spec.taps(), rng),
        );
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[channels]));
        Self { w, b, spec }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        Ok(g.tape.depthwise_conv3d(x, w, Some(b), self.spec)?)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[dim], 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta, eps }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        Ok(g.tape.layer_norm(x, gamma, beta, self.eps)?)
    }
}

/// Lookup table `[vocab, dim]`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub field: &'static str,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        field: &'static str,
        vocab: usize,
        dim: usize,
    ) -> Self {
        let table = store.add(format!("{name}.table"), Tensor::randn(&[vocab, dim], 1.0, rng));
        Self { table, field, vocab, dim }
    }

    /// Row `index` as a `[dim]` vector.
    pub fn forward(&self, g: &mut Graph, index: usize) -> Result<Var> {
        if index >= self.vocab {
            return Err(DiqpError::OutOfVocab {
                field: self.field,
                value: index,
                vocab: self.vocab,
            });
        }
        let table = g.param(self.table);
        let rows: Vec<usize> = (index * self.dim..(index + 1) * self.dim).collect();
        Ok(g.tape.gather(table, Arc::new(rows), &[self.dim])?)
    }
}

/// Elementwise activation shortcut.
pub fn act(g: &mut Graph, x: Var, kind: Activation) -> Var {
    g.tape.activation(x, kind)
}
