//! Central finite-difference gradient verification.
//!
//! The numeric side only ever runs forward passes on fresh tapes, so it is
//! independent of every backward rule it checks.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(input, element, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn eval<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Check every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor], f: F, h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let points: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |e| (i, e)))
        .collect();
    check_gradients_at(inputs, f, h, &points)
}

/// Check only the listed `(input, element)` pairs.
pub fn check_gradients_at<F>(inputs: &[Tensor], f: F, h: f64, points: &[(usize, usize)]) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut probe = inputs.to_vec();
    for &(i, e) in points {
        let analytic = grads.get(vars[i]).map_or(0.0, |g| g[e]);
        let orig = probe[i].data()[e];
        probe[i].data_mut()[e] = orig + h;
        let up = eval(&probe, &f)?;
        probe[i].data_mut()[e] = orig - h;
        let down = eval(&probe, &f)?;
        probe[i].data_mut()[e] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((i, e, analytic, numeric));
        }
    }
    Ok(report)
}
