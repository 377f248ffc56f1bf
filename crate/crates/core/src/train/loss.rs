//! Charbonnier loss `sqrt(d^2 + eps^2)`.

use diqp_tensor::{Tensor, Var};

use crate::config::{LossConfig, Reduction};
use crate::error::{DiqpError, Result};
use crate::nn::Graph;

// Both reductions are written as `eps + (sqrt(.) - eps)` terms so a zero
// residual yields exactly `eps`.

/// Differentiable loss between `res` and `target` on the graph.
pub fn charbonnier(g: &mut Graph, res: Var, target: Var, cfg: &LossConfig) -> Result<Var> {
    if g.shape(res) != g.shape(target) {
        return Err(DiqpError::Invalid(format!(
            "loss: shapes {:?} and {:?} differ",
            g.shape(res),
            g.shape(target)
        )));
    }
    let eps = cfg.epsilon;
    let d = g.tape.sub(res, target)?;
    let sq = g.tape.mul(d, d)?;
    match cfg.reduction {
        Reduction::PerElementMean => {
            let s = g.tape.add_scalar(sq, eps * eps);
            let r = g.tape.sqrt(s);
            let r = g.tape.add_scalar(r, -eps);
            let m = g.tape.mean(r);
            Ok(g.tape.add_scalar(m, eps))
        }
        Reduction::GlobalNorm => {
            let total = g.tape.sum(sq);
            let s = g.tape.add_scalar(total, eps * eps);
            Ok(g.tape.sqrt(s))
        }
    }
}

/// Plain evaluation of the same loss.
pub fn charbonnier_value(res: &Tensor, target: &Tensor, cfg: &LossConfig) -> Result<f64> {
    if res.shape() != target.shape() {
        return Err(DiqpError::Invalid(format!(
            "loss: shapes {:?} and {:?} differ",
            res.shape(),
            target.shape()
        )));
    }
    let eps = cfg.epsilon;
    let sq = res.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b));
    Ok(match cfg.reduction {
        Reduction::PerElementMean => {
            eps + sq.map(|s| (s + eps * eps).sqrt() - eps).sum::<f64>() / res.numel() as f64
        }
        Reduction::GlobalNorm => (sq.sum::<f64>() + eps * eps).sqrt(),
    })
}
