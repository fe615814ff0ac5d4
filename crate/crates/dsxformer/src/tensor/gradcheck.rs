//! Central finite-difference checking of tape gradients.

use super::{Tape, Tensor};
use crate::error::{num_err, Result};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub pass: bool,
}

/// Checks d(f)/d(x) for a scalar-valued `f` against central differences.
///
/// The step is cbrt(machine epsilon) scaled by the coordinate magnitude.
/// Relative error uses max(|ad|, |fd|, 1) as the denominator so that tiny
/// gradients are compared absolutely.
pub fn grad_check<F>(f: F, rows: usize, cols: usize, x: &[f64], tol: f64) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, Tensor<'t>) -> Result<Tensor<'t>>,
{
    let inputs = [(rows, cols, x.to_vec())];
    grad_check_multi(|tape, ts| f(tape, ts[0]), &inputs, tol, usize::MAX)
}

/// [`grad_check`] over a sampled subset of coordinates, for large inputs.
pub fn grad_check_sampled<F>(
    f: F,
    rows: usize,
    cols: usize,
    x: &[f64],
    tol: f64,
    max_coords: usize,
) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, Tensor<'t>) -> Result<Tensor<'t>>,
{
    let inputs = [(rows, cols, x.to_vec())];
    grad_check_multi(|tape, ts| f(tape, ts[0]), &inputs, tol, max_coords)
}

/// Joint check over several leaf tensors. At most `max_coords` coordinates
/// per tensor are perturbed, chosen by an even deterministic stride.
pub fn grad_check_multi<F>(
    f: F,
    inputs: &[(usize, usize, Vec<f64>)],
    tol: f64,
    max_coords: usize,
) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>>,
{
    let eval = |datas: &[Vec<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let ts: Vec<Tensor> = inputs
            .iter()
            .zip(datas)
            .map(|(&(r, c, _), d)| tape.leaf(r, c, d.clone(), false))
            .collect::<Result<_>>()?;
        let out = f(&tape, &ts)?;
        let v = out.item();
        if !v.is_finite() {
            return Err(num_err!("grad_check objective is not finite: {v}"));
        }
        Ok(v)
    };

    // Autodiff pass.
    let tape = Tape::new();
    let ts: Vec<Tensor> = inputs
        .iter()
        .map(|&(r, c, ref d)| tape.leaf(r, c, d.clone(), true))
        .collect::<Result<_>>()?;
    let out = f(&tape, &ts)?;
    if !out.item().is_finite() {
        return Err(num_err!("grad_check objective is not finite: {}", out.item()));
    }
    tape.backward(out)?;
    let grads: Vec<Vec<f64>> = ts
        .iter()
        .map(|t| t.grad().expect("requires_grad leaf missing grad after backward"))
        .collect();

    let h_base = f64::EPSILON.cbrt();
    let mut datas: Vec<Vec<f64>> = inputs.iter().map(|(_, _, d)| d.clone()).collect();
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for (ti, grad) in grads.iter().enumerate() {
        let n = grad.len();
        let take = n.min(max_coords);
        let stride = (n / take.max(1)).max(1);
        let mut k = 0;
        while k < n && checked_coords(k, stride) < take {
            let orig = datas[ti][k];
            let h = h_base * orig.abs().max(1.0);
            datas[ti][k] = orig + h;
            let fp = eval(&datas)?;
            datas[ti][k] = orig - h;
            let fm = eval(&datas)?;
            datas[ti][k] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let ad = grad[k];
            let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0);
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
            k += stride;
        }
    }
    Ok(GradReport { max_rel_err: max_rel, checked, pass: max_rel < tol })
}

fn checked_coords(k: usize, stride: usize) -> usize {
    k / stride
}
