//! Learnable-parameter registry.
//!
//! Parameters live outside any tape as plain f64 buffers. Each forward pass
//! binds them onto a fresh [`Tape`] as leaves; after backward the gradients
//! are read back out by parameter id.

use crate::error::{cfg_err, Result};
use crate::tensor::{Tape, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// Weight decay applies only to projection matrices, not biases,
    /// norm scales/shifts, or bias tables.
    pub decay: bool,
}

#[derive(Debug, Default)]
pub struct ParamStore {
    entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        decay: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.entries.iter().any(|p| p.name == name) {
            return Err(cfg_err!("parameter {name:?} registered twice"));
        }
        if rows * cols != data.len() {
            return Err(cfg_err!(
                "parameter {name:?} shape [{rows}, {cols}] does not match {} values",
                data.len()
            ));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(Param { name, rows, cols, data, decay });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total scalar parameter count.
    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|p| p.data.len()).sum()
    }

    /// Creates one leaf per parameter on `tape`, in registration order.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Result<Bound<'t>> {
        let leaves = self
            .entries
            .iter()
            .map(|p| tape.leaf(p.rows, p.cols, p.data.clone(), trainable))
            .collect::<Result<Vec<_>>>()?;
        Ok(Bound { leaves })
    }
}

/// Per-tape leaves for every registered parameter.
pub struct Bound<'t> {
    leaves: Vec<Tensor<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, id: ParamId) -> Tensor<'t> {
        self.leaves[id.0]
    }

    /// Gradients in registration order; zero vectors for untouched params.
    pub fn grads(&self) -> Vec<Vec<f64>> {
        self.leaves
            .iter()
            .map(|t| {
                t.grad()
                    .unwrap_or_else(|| vec![0.0; t.rows() * t.cols()])
            })
            .collect()
    }
}

/// Glorot-uniform init: +-sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Truncated normal (sigma 0.02, clipped to two sigma) used for projections.
pub fn trunc_normal<R: Rng>(n: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let dist = Normal::new(0.0, sigma).expect("valid normal");
    (0..n)
        .map(|_| loop {
            let v = dist.sample(rng);
            if v.abs() <= 2.0 * sigma {
                break v;
            }
        })
        .collect()
}
