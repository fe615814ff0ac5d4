//! AdamW with decoupled weight decay. Decay is applied only to parameters
//! registered with the decay flag (projection matrices); biases, norm
//! parameters, and bias tables update without it.

use crate::error::{dim_err, Result};
use crate::params::ParamStore;

pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
}

impl AdamW {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let m = store.iter().map(|(_, p)| vec![0.0; p.data.len()]).collect::<Vec<_>>();
        let v = m.clone();
        AdamW { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }

    /// One update from gradients in registration order.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(dim_err!(
                "optimizer holds {} parameter states, got {} gradients",
                self.m.len(),
                grads.len()
            ));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        for (slot, id) in ids.into_iter().enumerate() {
            let p = store.param_mut(id);
            let g = &grads[slot];
            if g.len() != p.data.len() {
                return Err(dim_err!(
                    "gradient for {:?} has {} values, parameter has {}",
                    p.name,
                    g.len(),
                    p.data.len()
                ));
            }
            let decay = if p.decay { self.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.data[i] -=
                    self.lr * (mhat / (vhat.sqrt() + self.eps)) + self.lr * decay * p.data[i];
            }
        }
        Ok(())
    }
}

/// Global-norm gradient clipping; a no-op when `max_norm <= 0`.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm: f64 =
        grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
}
