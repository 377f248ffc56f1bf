//! AdamW with bias correction and decoupled weight decay.

use diqp_tensor::Tensor;

use crate::config::OptimizerConfig;
use crate::error::{DiqpError, Result};

#[derive(Clone, Debug)]
pub struct AdamW {
    pub cfg: OptimizerConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Completed updates.
    pub t: u64,
}

impl AdamW {
    pub fn new(cfg: &OptimizerConfig, params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            cfg: cfg.clone(),
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update at learning rate `lr`. `step` labels errors.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64, step: usize) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(DiqpError::Invalid(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(DiqpError::Invalid(format!(
                    "gradient {i} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(DiqpError::Numerical {
                    step,
                    what: format!("non-finite gradient in parameter tensor {i}"),
                });
            }
        }
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let decay = 1.0 - lr * c.weight_decay;
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] = p[i] * decay - lr * mh / (vh.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
