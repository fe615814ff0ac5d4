//! Dual-pooling spectral squeeze-expansion block.
//!
//! Pools complementary per-channel statistics over all tokens (mean + max),
//! pushes the pooled descriptor through an expand-then-compress gating
//! network, and multiplies the resulting (0,1) gate into every token's
//! channels.

use crate::error::{cfg_err, data_err, dim_err, Result};
use crate::params::{xavier_uniform, Bound, ParamId, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;

/// Gate-network parameters: expand d -> r*d, compress r*d -> d.
#[derive(Debug)]
pub struct DsxParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub r: usize,
    pub d: usize,
}

impl DsxParams {
    /// Registers freshly initialized gate weights. Weights are
    /// Glorot-uniform, biases zero, so the initial gate sits near 0.5.
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        r: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if r < 1 {
            return Err(cfg_err!("dsx expansion ratio must be >= 1, got {r}"));
        }
        let rd = r * d;
        let w1 = store.register(format!("{prefix}.w1"), rd, d, xavier_uniform(rd, d, rng), true)?;
        let b1 = store.register(format!("{prefix}.b1"), 1, rd, vec![0.0; rd], false)?;
        let w2 = store.register(format!("{prefix}.w2"), d, rd, xavier_uniform(d, rd, rng), true)?;
        let b2 = store.register(format!("{prefix}.b2"), 1, d, vec![0.0; d], false)?;
        Ok(Self { w1, b1, w2, b2, r, d })
    }
}

/// z = z_avg + z_max over the token axis: per-channel mean plus per-channel
/// max of the N tokens.
pub fn dual_pool_squeeze<'t>(tokens: &Tensor<'t>) -> Result<Tensor<'t>> {
    if tokens.rows() == 0 {
        return Err(data_err!("dual_pool_squeeze on an empty token matrix"));
    }
    let avg = tokens.mean_rows()?;
    let max = tokens.max_rows()?;
    avg.add(&max)
}

/// s = sigmoid(W2 relu(W1 z + b1) + b2), every component strictly in (0,1).
pub fn expand_compress<'t>(z: &Tensor<'t>, p: &DsxParams, bound: &Bound<'t>) -> Result<Tensor<'t>> {
    let (zr, zc) = z.shape();
    if zr != 1 || zc != p.d {
        return Err(dim_err!("expand_compress expects [1, {}], got [{zr}, {zc}]", p.d));
    }
    let w1 = bound.get(p.w1);
    let w2 = bound.get(p.w2);
    let h = z.matmul(&w1.transpose())?.add_row(&bound.get(p.b1))?.relu()?;
    h.matmul(&w2.transpose())?.add_row(&bound.get(p.b2))?.sigmoid()
}

/// Channel-wise modulation: every token row multiplied elementwise by s.
pub fn recalibrate<'t>(tokens: &Tensor<'t>, s: &Tensor<'t>) -> Result<Tensor<'t>> {
    tokens.mul_row(s)
}

/// Full block: squeeze -> gate -> recalibrate. The recalibrated matrix
/// replaces the input on the residual stream.
pub fn dsx_forward<'t>(
    tokens: &Tensor<'t>,
    p: &DsxParams,
    bound: &Bound<'t>,
) -> Result<Tensor<'t>> {
    let z = dual_pool_squeeze(tokens)?;
    let s = expand_compress(&z, p, bound)?;
    recalibrate(tokens, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, Tape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_params(store: &mut ParamStore, d: usize, r: usize, seed: u64) -> DsxParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DsxParams::init(store, "dsx", d, r, &mut rng).unwrap()
    }

    #[test]
    fn dual_pool_constant_tokens() {
        let tape = Tape::new();
        // all tokens equal per channel -> mean = max = c -> z = 2c
        let f = tape.leaf(3, 2, vec![1.5, -2.0, 1.5, -2.0, 1.5, -2.0], false).unwrap();
        let z = dual_pool_squeeze(&f).unwrap().data();
        assert_eq!(z, vec![3.0, -4.0]);
    }

    #[test]
    fn dual_pool_single_token_doubles() {
        let tape = Tape::new();
        let f = tape.leaf(1, 3, vec![0.25, -1.0, 4.0], false).unwrap();
        assert_eq!(dual_pool_squeeze(&f).unwrap().data(), vec![0.5, -2.0, 8.0]);
    }

    #[test]
    fn dual_pool_hand_example() {
        let tape = Tape::new();
        let f = tape.leaf(2, 2, vec![1.0, 4.0, 3.0, 2.0], false).unwrap();
        // z_avg = [2, 3], z_max = [3, 4]
        assert_eq!(dual_pool_squeeze(&f).unwrap().data(), vec![5.0, 7.0]);
    }

    #[test]
    fn zero_weights_gate_is_half() {
        let mut store = ParamStore::new();
        let p = toy_params(&mut store, 4, 2, 1);
        for id in [p.w1, p.w2] {
            store.param_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let tape = Tape::new();
        let bound = store.bind(&tape, false).unwrap();
        let z = tape.leaf(1, 4, vec![0.7, -0.3, 2.0, 0.0], false).unwrap();
        let s = expand_compress(&z, &p, &bound).unwrap().data();
        for v in s {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_bias_gate_near_one() {
        let mut store = ParamStore::new();
        let p = toy_params(&mut store, 3, 2, 2);
        for id in [p.w1, p.w2] {
            store.param_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        store.param_mut(p.b2).data.iter_mut().for_each(|v| *v = 20.0);
        let tape = Tape::new();
        let bound = store.bind(&tape, false).unwrap();
        let z = tape.leaf(1, 3, vec![1.0, 2.0, 3.0], false).unwrap();
        let s = expand_compress(&z, &p, &bound).unwrap().data();
        for v in s {
            assert!(v > 1.0 - 1e-8 && v < 1.0);
        }
    }

    #[test]
    fn expand_compress_vs_straight_line_oracle() {
        let mut store = ParamStore::new();
        let d = 4;
        let r = 2;
        let p = toy_params(&mut store, d, r, 3);
        let tape = Tape::new();
        let bound = store.bind(&tape, false).unwrap();
        let z_data = vec![0.9, -1.4, 0.2, 2.1];
        let z = tape.leaf(1, d, z_data.clone(), false).unwrap();
        let got = expand_compress(&z, &p, &bound).unwrap().data();
        // straight-line recomputation from the raw weight buffers
        let w1 = &store.param(p.w1).data;
        let w2 = &store.param(p.w2).data;
        let mut h = vec![0.0; r * d];
        for i in 0..r * d {
            let mut s = 0.0;
            for j in 0..d {
                s += w1[i * d + j] * z_data[j];
            }
            h[i] = s.max(0.0);
        }
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..r * d {
                s += w2[i * (r * d) + j] * h[j];
            }
            let want = 1.0 / (1.0 + (-s).exp());
            assert!((got[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn recalibrate_uniform_half_scales() {
        let tape = Tape::new();
        let f = tape.leaf(2, 2, vec![2.0, -4.0, 6.0, 8.0], false).unwrap();
        let s = tape.leaf(1, 2, vec![0.5, 0.5], false).unwrap();
        assert_eq!(recalibrate(&f, &s).unwrap().data(), vec![1.0, -2.0, 3.0, 4.0]);
    }

    #[test]
    fn recalibrate_limits() {
        let tape = Tape::new();
        let f = tape.leaf(1, 2, vec![3.0, -5.0], false).unwrap();
        let s = tape.leaf(1, 2, vec![1.0, 0.0], false).unwrap();
        assert_eq!(recalibrate(&f, &s).unwrap().data(), vec![3.0, 0.0]);
    }

    #[test]
    fn recalibrate_length_mismatch_errors() {
        let tape = Tape::new();
        let f = tape.zeros(2, 3);
        let s = tape.zeros(1, 2);
        assert!(recalibrate(&f, &s).is_err());
    }

    #[test]
    fn forward_zero_input_stays_zero() {
        let mut store = ParamStore::new();
        let p = toy_params(&mut store, 4, 2, 4);
        let tape = Tape::new();
        let bound = store.bind(&tape, false).unwrap();
        let f = tape.zeros(3, 4);
        let out = dsx_forward(&f, &p, &bound).unwrap().data();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_identical_tokens_stay_identical() {
        let mut store = ParamStore::new();
        let p = toy_params(&mut store, 3, 2, 5);
        let tape = Tape::new();
        let bound = store.bind(&tape, false).unwrap();
        let f = tape.leaf(4, 3, [0.3, -0.8, 1.1].repeat(4), false).unwrap();
        let out = dsx_forward(&f, &p, &bound).unwrap().data();
        for i in 1..4 {
            assert_eq!(out[i * 3..(i + 1) * 3], out[0..3]);
        }
    }

    #[test]
    fn forward_grad_check() {
        let mut store = ParamStore::new();
        let p = toy_params(&mut store, 4, 2, 6);
        let x = vec![
            0.5, -0.2, 1.3, 0.8, -1.1, 0.4, 0.9, -0.6, 0.2, 1.5, -0.3, 0.7,
        ];
        let rep = grad_check(
            |tape, t| {
                let bound = store.bind(tape, false)?;
                Ok(dsx_forward(&t, &p, &bound)?.mean_all())
            },
            3,
            4,
            &x,
            1e-4,
        )
        .unwrap();
        assert!(rep.pass, "max rel err {}", rep.max_rel_err);
    }
}
