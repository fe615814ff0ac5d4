//! Label-smoothed cross-entropy computed in log-space from logits.

use crate::error::{cfg_err, dim_err, Result};
use crate::tensor::Tensor;

/// loss = -sum_k q_k * logsoftmax(logits)_k with
/// q = (1-eps) * onehot(target) + eps/K. `target` is a 1-based class id.
pub fn cross_entropy_smoothed<'t>(
    logits: &Tensor<'t>,
    target: usize,
    eps: f64,
) -> Result<Tensor<'t>> {
    let (r, k) = logits.shape();
    if r != 1 {
        return Err(dim_err!("loss expects [1, K] logits, got [{r}, {k}]"));
    }
    if target == 0 || target > k {
        return Err(cfg_err!("target class {target} outside 1..={k}"));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(cfg_err!("label smoothing must be in [0, 1], got {eps}"));
    }
    let mut q = vec![eps / k as f64; k];
    q[target - 1] += 1.0 - eps;
    let q = logits.tape.leaf(1, k, q, false)?;
    let logp = logits.log_softmax_rows()?;
    Ok(q.mul(&logp)?.sum_all().scale(-1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, Tape};

    #[test]
    fn perfect_one_hot_loss_vanishes() {
        let tape = Tape::new();
        let logits = tape.leaf(1, 3, vec![40.0, 0.0, 0.0], false).unwrap();
        let loss = cross_entropy_smoothed(&logits, 1, 0.0).unwrap().item();
        assert!(loss >= 0.0 && loss < 1e-12, "{loss}");
    }

    #[test]
    fn uniform_prediction_gives_log_k() {
        let tape = Tape::new();
        let logits = tape.leaf(1, 4, vec![0.7; 4], false).unwrap();
        for (target, eps) in [(1, 0.0), (3, 0.1), (4, 0.5)] {
            let loss = cross_entropy_smoothed(&logits, target, eps).unwrap().item();
            assert!((loss - 4.0f64.ln()).abs() < 1e-12, "target {target} eps {eps}");
        }
    }

    #[test]
    fn hand_formula_k3() {
        let tape = Tape::new();
        let logits_data = vec![1.0, 0.0, 0.0];
        let logits = tape.leaf(1, 3, logits_data.clone(), false).unwrap();
        let loss = cross_entropy_smoothed(&logits, 1, 0.1).unwrap().item();
        let z: f64 = logits_data.iter().map(|l| l.exp()).sum();
        let logp: Vec<f64> = logits_data.iter().map(|l| l - z.ln()).collect();
        let q = [0.9 + 0.1 / 3.0, 0.1 / 3.0, 0.1 / 3.0];
        let want = -(q[0] * logp[0] + q[1] * logp[1] + q[2] * logp[2]);
        assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
    }

    #[test]
    fn smoothing_keeps_loss_positive() {
        let tape = Tape::new();
        let logits = tape.leaf(1, 5, vec![90.0, -3.0, 0.0, 1.0, 2.0], false).unwrap();
        let loss = cross_entropy_smoothed(&logits, 1, 0.1).unwrap().item();
        assert!(loss > 0.0);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let tape = Tape::new();
        let logits = tape.leaf(1, 3, vec![500.0, -500.0, 0.0], false).unwrap();
        let loss = cross_entropy_smoothed(&logits, 2, 0.1).unwrap().item();
        assert!(loss.is_finite());
    }

    #[test]
    fn bad_target_rejected() {
        let tape = Tape::new();
        let logits = tape.leaf(1, 3, vec![0.0; 3], false).unwrap();
        assert!(cross_entropy_smoothed(&logits, 0, 0.0).is_err());
        assert!(cross_entropy_smoothed(&logits, 4, 0.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = vec![0.4, -1.2, 0.9, 0.1];
        let rep = grad_check(
            |_, t| cross_entropy_smoothed(&t, 2, 0.1),
            1,
            4,
            &x,
            1e-6,
        )
        .unwrap();
        assert!(rep.pass, "max rel err {}", rep.max_rel_err);
    }
}
