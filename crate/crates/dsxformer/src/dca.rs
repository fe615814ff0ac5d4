//! Window-based dynamic context attention.
//!
//! The token grid is tiled into non-overlapping w x w windows (zero-padded
//! bottom/right). Inside each window, multi-head scaled dot-product
//! attention with a learned relative-position bias table is modulated by a
//! per-window context vector: the row-mean of the score matrix rescales
//! each key column before softmax. Alternating blocks cyclically shift the
//! grid by w/2 with additive masking so information crosses window borders.

use crate::error::{cfg_err, dim_err, Result};
use crate::params::{trunc_normal, Bound, ParamId, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;

/// Additive stand-in for minus infinity in masked attention logits.
pub const MASK_NEG: f64 = -1e9;

/// Attention parameters for one block.
#[derive(Debug)]
pub struct DcaParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    /// (2w-1)^2 x heads learned relative-position biases, zero-initialized.
    pub bias_table: ParamId,
    pub heads: usize,
    pub d: usize,
    pub w: usize,
    /// Attention-output dropout rate.
    pub drop: f64,
    /// Dynamic context scaling on/off (off reduces to plain windowed MHA).
    pub dcs_enabled: bool,
    /// Substitute |g| for g in the scaling step (ablation flag).
    pub dcs_abs_context: bool,
}

impl DcaParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        heads: usize,
        w: usize,
        drop: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(cfg_err!("embedding dim {d} not divisible by {heads} heads"));
        }
        if w == 0 {
            return Err(cfg_err!("window side must be >= 1"));
        }
        let table_rows = (2 * w - 1) * (2 * w - 1);
        let proj = |name: &str, store: &mut ParamStore, rng: &mut R| {
            store.register(format!("{prefix}.{name}"), d, d, trunc_normal(d * d, 0.02, rng), true)
        };
        let wq = proj("wq", store, rng)?;
        let wk = proj("wk", store, rng)?;
        let wv = proj("wv", store, rng)?;
        let wo = proj("wo", store, rng)?;
        let bias_table = store.register(
            format!("{prefix}.bias_table"),
            table_rows,
            heads,
            vec![0.0; table_rows * heads],
            false,
        )?;
        Ok(Self {
            wq,
            wk,
            wv,
            wo,
            bias_table,
            heads,
            d,
            w,
            drop,
            dcs_enabled: true,
            dcs_abs_context: false,
        })
    }

    pub fn d_head(&self) -> usize {
        self.d / self.heads
    }
}

/// Flat lookup indices mapping window-position pair (i, j) to a row of the
/// (2w-1)^2 bias table, by relative offset (dr, dc) in [-(w-1), w-1].
pub fn relative_index(w: usize) -> Vec<usize> {
    let n = w * w;
    let span = 2 * w - 1;
    let mut idx = Vec::with_capacity(n * n);
    for i in 0..n {
        let (ri, ci) = (i / w, i % w);
        for j in 0..n {
            let (rj, cj) = (j / w, j % w);
            let dr = ri as isize - rj as isize + (w as isize - 1);
            let dc = ci as isize - cj as isize + (w as isize - 1);
            idx.push(dr as usize * span + dc as usize);
        }
    }
    idx
}

/// Tokens regrouped into w x w windows; `pad` records rows/cols of zero
/// tokens added bottom/right to reach multiples of w.
pub struct WindowBatch<'t> {
    pub windows: Vec<Tensor<'t>>,
    pub rows: usize,
    pub cols: usize,
    pub w: usize,
    pub pad: (usize, usize),
}

impl<'t> WindowBatch<'t> {
    pub fn windows_per_row(&self) -> usize {
        (self.cols + self.w - 1) / self.w
    }

    pub fn windows_per_col(&self) -> usize {
        (self.rows + self.w - 1) / self.w
    }
}

/// Tiles a `[rows*cols, d]` token grid into windows, zero-padding
/// bottom/right. Token order within each window is row-major.
pub fn window_partition<'t>(
    tokens: &Tensor<'t>,
    rows: usize,
    cols: usize,
    w: usize,
) -> Result<WindowBatch<'t>> {
    if w == 0 {
        return Err(cfg_err!("window side must be >= 1"));
    }
    let (tr, _) = tokens.shape();
    if tr != rows * cols {
        return Err(dim_err!("token grid has {tr} rows, expected {rows}x{cols}"));
    }
    let wr = (rows + w - 1) / w;
    let wc = (cols + w - 1) / w;
    let mut windows = Vec::with_capacity(wr * wc);
    for wi in 0..wr {
        for wj in 0..wc {
            let mut idx = Vec::with_capacity(w * w);
            for u in 0..w {
                for v in 0..w {
                    let r = wi * w + u;
                    let c = wj * w + v;
                    idx.push(if r < rows && c < cols { Some(r * cols + c) } else { None });
                }
            }
            windows.push(tokens.gather_rows(&idx)?);
        }
    }
    Ok(WindowBatch { windows, rows, cols, w, pad: (wr * w - rows, wc * w - cols) })
}

/// Exact inverse of [`window_partition`] on the unpadded region.
pub fn window_reverse<'t>(wb: &WindowBatch<'t>) -> Result<Tensor<'t>> {
    let w = wb.w;
    let wr = wb.windows_per_col();
    let wc = wb.windows_per_row();
    if wb.windows.len() != wr * wc {
        return Err(dim_err!(
            "window batch holds {} windows, grid expects {}",
            wb.windows.len(),
            wr * wc
        ));
    }
    for t in &wb.windows {
        if t.rows() != w * w {
            return Err(dim_err!("window has {} tokens, expected {}", t.rows(), w * w));
        }
    }
    let tape = wb.windows[0].tape;
    let stacked = tape.concat_rows(&wb.windows)?;
    let mut idx = Vec::with_capacity(wb.rows * wb.cols);
    for r in 0..wb.rows {
        for c in 0..wb.cols {
            let win = (r / w) * wc + c / w;
            let within = (r % w) * w + c % w;
            idx.push(Some(win * w * w + within));
        }
    }
    stacked.gather_rows(&idx)
}

/// Per-window additive mask for the shifted-window scheme. Cross-region
/// token pairs carry [`MASK_NEG`]; everything is zero when shift = 0.
pub struct ShiftMask {
    pub shift: usize,
    pub masks: Vec<Vec<f64>>,
}

impl ShiftMask {
    pub fn none(n_windows: usize, w: usize) -> Self {
        Self { shift: 0, masks: vec![vec![0.0; w * w * w * w]; n_windows] }
    }

    /// Region ids follow the usual three-slice split of each axis at
    /// len-w and len-shift, rolled along with the tokens; padded cells get
    /// their own region so real tokens never attend into padding here.
    pub fn build(rows: usize, cols: usize, w: usize, shift: usize) -> Self {
        let slice_id = |p: usize, len: usize| -> usize {
            if p < len.saturating_sub(w) {
                0
            } else if p < len.saturating_sub(shift) {
                1
            } else {
                2
            }
        };
        let wr = (rows + w - 1) / w;
        let wc = (cols + w - 1) / w;
        let (rp, cp) = (wr * w, wc * w);
        // region id per padded-grid cell, after the cyclic (-shift) roll
        let mut ids = vec![usize::MAX; rp * cp];
        for r in 0..rows {
            for c in 0..cols {
                let src_r = (r + shift) % rows;
                let src_c = (c + shift) % cols;
                ids[r * cp + c] = slice_id(src_r, rows) * 3 + slice_id(src_c, cols);
            }
        }
        let n = w * w;
        let mut masks = Vec::with_capacity(wr * wc);
        for wi in 0..wr {
            for wj in 0..wc {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    let id_i = ids[(wi * w + i / w) * cp + wj * w + i % w];
                    for j in 0..n {
                        let id_j = ids[(wi * w + j / w) * cp + wj * w + j % w];
                        if id_i != id_j {
                            m[i * n + j] = MASK_NEG;
                        }
                    }
                }
                masks.push(m);
            }
        }
        Self { shift, masks }
    }
}

/// Projects window tokens to per-head Q, K, V (channel axis split evenly).
pub fn qkv_project<'t>(
    tokens: &Tensor<'t>,
    p: &DcaParams,
    bound: &Bound<'t>,
) -> Result<(Vec<Tensor<'t>>, Vec<Tensor<'t>>, Vec<Tensor<'t>>)> {
    let (_, d) = tokens.shape();
    if d != p.d {
        return Err(dim_err!("window tokens have {d} channels, params expect {}", p.d));
    }
    if d % p.heads != 0 {
        return Err(cfg_err!("embedding dim {d} not divisible by {} heads", p.heads));
    }
    let dh = p.d_head();
    let split = |full: Tensor<'t>| -> Result<Vec<Tensor<'t>>> {
        (0..p.heads).map(|h| full.slice_cols(h * dh, dh)).collect()
    };
    let q = split(tokens.matmul(&bound.get(p.wq))?)?;
    let k = split(tokens.matmul(&bound.get(p.wk))?)?;
    let v = split(tokens.matmul(&bound.get(p.wv))?)?;
    Ok((q, k, v))
}

/// A = Q K^T / sqrt(d_head) + B_rel for one head.
pub fn attention_scores<'t>(
    q: &Tensor<'t>,
    k: &Tensor<'t>,
    bias: &Tensor<'t>,
) -> Result<Tensor<'t>> {
    let (n, dh) = q.shape();
    let (br, bc) = bias.shape();
    if (br, bc) != (n, n) {
        return Err(dim_err!("bias shape [{br}, {bc}] does not match {n} tokens"));
    }
    let scaled = q.matmul(&k.transpose())?.scale(1.0 / (dh as f64).sqrt());
    scaled.add(bias)
}

/// Context vector g: the mean over query rows of the score matrix, one
/// salience scalar per key token.
pub fn context_vector<'t>(a: &Tensor<'t>) -> Result<Tensor<'t>> {
    a.mean_rows()
}

/// A_scaled[i, j] = A[i, j] * g[j]: key column j modulated by its aggregate
/// salience.
pub fn dynamic_scale<'t>(a: &Tensor<'t>, g: &Tensor<'t>) -> Result<Tensor<'t>> {
    a.mul_row(g)
}

/// Per-head softmax(A_scaled + mask) V, heads re-concatenated, then output
/// projection and (train-only) dropout. The residual add is the caller's.
pub fn attend<'t, R: Rng>(
    a_scaled: &[Tensor<'t>],
    v: &[Tensor<'t>],
    mask: Option<&Tensor<'t>>,
    wo: &Tensor<'t>,
    drop: f64,
    train: bool,
    rng: &mut R,
) -> Result<Tensor<'t>> {
    let tape = wo.tape;
    let mut outs = Vec::with_capacity(a_scaled.len());
    for (a, vh) in a_scaled.iter().zip(v) {
        let logits = match mask {
            Some(m) => a.add(m)?,
            None => *a,
        };
        outs.push(logits.softmax_rows()?.matmul(vh)?);
    }
    let merged = tape.concat_cols(&outs)?.matmul(wo)?;
    dropout(&merged, drop, train, rng)
}

/// Inverted dropout: train-only Bernoulli mask with 1/(1-rate) rescaling.
pub fn dropout<'t, R: Rng>(
    t: &Tensor<'t>,
    rate: f64,
    train: bool,
    rng: &mut R,
) -> Result<Tensor<'t>> {
    if !train || rate == 0.0 {
        return Ok(*t);
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(cfg_err!("dropout rate must be in [0, 1), got {rate}"));
    }
    let (r, c) = t.shape();
    let keep = 1.0 - rate;
    let mask: Vec<f64> =
        (0..r * c).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
    let m = t.tape.leaf(r, c, mask, false)?;
    t.mul(&m)
}

/// Attention over one window's tokens.
fn window_attention<'t, R: Rng>(
    tokens: &Tensor<'t>,
    p: &DcaParams,
    bound: &Bound<'t>,
    rel_idx: &[usize],
    mask: Option<&Tensor<'t>>,
    train: bool,
    rng: &mut R,
) -> Result<Tensor<'t>> {
    let n = p.w * p.w;
    let (q, k, v) = qkv_project(tokens, p, bound)?;
    let table = bound.get(p.bias_table);
    let mut scaled = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let bias = table.gather_table_col(h, rel_idx, n)?;
        let scores = attention_scores(&q[h], &k[h], &bias)?;
        if p.dcs_enabled {
            let mut g = context_vector(&scores)?;
            if p.dcs_abs_context {
                // |g| = relu(g) + relu(-g)
                g = g.relu()?.add(&g.scale(-1.0).relu()?)?;
            }
            scaled.push(dynamic_scale(&scores, &g)?);
        } else {
            scaled.push(scores);
        }
    }
    let wo = bound.get(p.wo);
    attend(&scaled, &v, mask, &wo, p.drop, train, rng)
}

fn cyclic_roll<'t>(
    tokens: &Tensor<'t>,
    rows: usize,
    cols: usize,
    dr: usize,
    dc: usize,
) -> Result<Tensor<'t>> {
    let mut idx = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            idx.push(Some(((r + dr) % rows) * cols + (c + dc) % cols));
        }
    }
    tokens.gather_rows(&idx)
}

/// Full grid-level pass: optional cyclic shift, partition, per-window
/// attention with mask, reverse, un-shift. Returns the `[rows*cols, d]`
/// token grid.
pub fn dca_forward<'t, R: Rng>(
    tokens: &Tensor<'t>,
    rows: usize,
    cols: usize,
    p: &DcaParams,
    bound: &Bound<'t>,
    shift: usize,
    train: bool,
    rng: &mut R,
) -> Result<Tensor<'t>> {
    let tape = tokens.tape;
    let shifted = if shift > 0 { cyclic_roll(tokens, rows, cols, shift, shift)? } else { *tokens };
    let wb = window_partition(&shifted, rows, cols, p.w)?;
    let mask = if shift > 0 {
        ShiftMask::build(rows, cols, p.w, shift)
    } else {
        ShiftMask::none(wb.windows.len(), p.w)
    };
    let rel_idx = relative_index(p.w);
    let n = p.w * p.w;
    let mut outs = Vec::with_capacity(wb.windows.len());
    for (win, mdata) in wb.windows.iter().zip(&mask.masks) {
        let m = if shift > 0 {
            Some(tape.leaf(n, n, mdata.clone(), false)?)
        } else {
            None
        };
        outs.push(window_attention(win, p, bound, &rel_idx, m.as_ref(), train, rng)?);
    }
    let out_batch = WindowBatch { windows: outs, rows, cols, w: p.w, pad: wb.pad };
    let merged = window_reverse(&out_batch)?;
    if shift > 0 {
        cyclic_roll(&merged, rows, cols, rows - shift % rows, cols - shift % cols)
    } else {
        Ok(merged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use crate::tensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn partition_exact_fit() {
        let tape = Tape::new();
        let t = tape.leaf(16, 2, (0..32).map(f64::from).collect(), false).unwrap();
        let wb = window_partition(&t, 4, 4, 4).unwrap();
        assert_eq!(wb.windows.len(), 1);
        assert_eq!(wb.pad, (0, 0));
        assert_eq!(wb.windows[0].shape(), (16, 2));
    }

    #[test]
    fn partition_pads_to_multiple() {
        let tape = Tape::new();
        let t = tape.zeros(25, 3);
        let wb = window_partition(&t, 5, 5, 4).unwrap();
        assert_eq!(wb.windows.len(), 4);
        assert_eq!(wb.pad, (3, 3));
    }

    #[test]
    fn partition_reverse_roundtrip() {
        let mut r = rng();
        let tape = Tape::new();
        let data = rand_vec(7 * 6 * 8, &mut r);
        let t = tape.leaf(42, 8, data.clone(), false).unwrap();
        let wb = window_partition(&t, 7, 6, 4).unwrap();
        let back = window_reverse(&wb).unwrap();
        assert_eq!(back.data(), data);
        // idempotence: partition(reverse(partition)) gives same windows
        let wb2 = window_partition(&back, 7, 6, 4).unwrap();
        for (a, b) in wb.windows.iter().zip(&wb2.windows) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn reverse_single_1x1_window_is_identity() {
        let tape = Tape::new();
        let t = tape.leaf(1, 2, vec![5.0, -3.0], false).unwrap();
        let wb = window_partition(&t, 1, 1, 1).unwrap();
        assert_eq!(window_reverse(&wb).unwrap().data(), vec![5.0, -3.0]);
    }

    #[test]
    fn partition_rejects_zero_window() {
        let tape = Tape::new();
        let t = tape.zeros(4, 2);
        assert!(matches!(
            window_partition(&t, 2, 2, 0),
            Err(crate::error::DsxError::Config(_))
        ));
    }

    #[test]
    fn qkv_identity_projection_resplits_tokens() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let p = DcaParams::init(&mut store, "dca", 4, 2, 2, 0.0, &mut r).unwrap();
        // overwrite Wq with identity
        let d = 4;
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        store.param_mut(p.wq).data.copy_from_slice(&eye);
        let tape = Tape::new();
        let bound = store.bind(&tape, false).unwrap();
        let data = rand_vec(4 * d, &mut r);
        let tokens = tape.leaf(4, d, data.clone(), false).unwrap();
        let (q, _, _) = qkv_project(&tokens, &p, &bound).unwrap();
        for row in 0..4 {
            for j in 0..2 {
                assert_eq!(q[0].data()[row * 2 + j], data[row * d + j]);
                assert_eq!(q[1].data()[row * 2 + j], data[row * d + 2 + j]);
            }
        }
    }

    #[test]
    fn qkv_indivisible_heads_is_config_error() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let err = DcaParams::init(&mut store, "dca", 6, 4, 2, 0.0, &mut r).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('6') && msg.contains('4'), "{msg}");
    }

    #[test]
    fn scores_hand_example_two_tokens() {
        let tape = Tape::new();
        let q = tape.leaf(2, 2, vec![1.0, 0.0, 0.0, 2.0], false).unwrap();
        let k = tape.leaf(2, 2, vec![1.0, 1.0, -1.0, 0.5], false).unwrap();
        let bias = tape.leaf(2, 2, vec![0.1, -0.1, 0.2, 0.0], false).unwrap();
        let a = attention_scores(&q, &k, &bias).unwrap().data();
        let s = std::f64::consts::SQRT_2.recip();
        let want = [1.0 * s + 0.1, -1.0 * s - 0.1, 2.0 * s + 0.2, 1.0 * s];
        for (g, w) in a.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn zero_inputs_zero_scores() {
        let tape = Tape::new();
        let q = tape.zeros(4, 2);
        let k = tape.zeros(4, 2);
        let bias = tape.zeros(4, 4);
        assert!(attention_scores(&q, &k, &bias).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn context_vector_of_identity() {
        let tape = Tape::new();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let a = tape.leaf(3, 3, eye, false).unwrap();
        let g = context_vector(&a).unwrap().data();
        for v in g {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn context_vector_constant_matrix() {
        let tape = Tape::new();
        let a = tape.leaf(4, 4, vec![0.7; 16], false).unwrap();
        assert!(context_vector(&a).unwrap().data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn dynamic_scale_loop_oracle() {
        let mut r = rng();
        let tape = Tape::new();
        let adat = rand_vec(16, &mut r);
        let a = tape.leaf(4, 4, adat.clone(), false).unwrap();
        let g = context_vector(&a).unwrap();
        let gdat = g.data();
        let out = dynamic_scale(&a, &g).unwrap().data();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(out[i * 4 + j], adat[i * 4 + j] * gdat[j]);
            }
        }
    }

    #[test]
    fn dynamic_scale_ones_is_identity() {
        let mut r = rng();
        let tape = Tape::new();
        let adat = rand_vec(9, &mut r);
        let a = tape.leaf(3, 3, adat.clone(), false).unwrap();
        let ones = tape.leaf(1, 3, vec![1.0; 3], false).unwrap();
        assert_eq!(dynamic_scale(&a, &ones).unwrap().data(), adat);
    }

    #[test]
    fn attend_uniform_attention_averages_values() {
        let tape = Tape::new();
        let mut r = rng();
        // one head, 3 tokens, uniform logits -> each output row = mean of V rows
        let a = tape.zeros(3, 3);
        let v = tape.leaf(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], false).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let wo = tape.leaf(3, 3, eye, false).unwrap();
        let o = attend(&[a], &[v], None, &wo, 0.0, false, &mut r).unwrap().data();
        for val in o {
            assert!((val - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attend_mask_forces_near_zero_weight() {
        let tape = Tape::new();
        let mut r = rng();
        let a = tape.zeros(2, 2);
        let v = tape.leaf(2, 1, vec![0.0, 1.0], false).unwrap();
        let mask = tape.leaf(2, 2, vec![0.0, MASK_NEG, 0.0, 0.0], false).unwrap();
        let wo = tape.leaf(1, 1, vec![1.0], false).unwrap();
        let o = attend(&[a], &[v], Some(&mask), &wo, 0.0, false, &mut r).unwrap().data();
        // row 0 masks token 1, so its weight on v=1 is < 1e-12
        assert!(o[0] < 1e-12);
        assert!((o[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn forward_eval_mode_is_deterministic() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let p = DcaParams::init(&mut store, "dca", 8, 2, 2, 0.5, &mut r).unwrap();
        let data = rand_vec(16 * 8, &mut r);
        let run = |rng_seed: u64| {
            let tape = Tape::new();
            let bound = store.bind(&tape, false).unwrap();
            let t = tape.leaf(16, 8, data.clone(), false).unwrap();
            let mut rr = ChaCha8Rng::seed_from_u64(rng_seed);
            dca_forward(&t, 4, 4, &p, &bound, 0, false, &mut rr).unwrap().data()
        };
        // different rng streams, eval mode -> bit-identical
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn forward_shift_changes_output_via_mask_and_positions() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let p = DcaParams::init(&mut store, "dca", 4, 1, 4, 0.0, &mut r).unwrap();
        let data = rand_vec(16 * 4, &mut r);
        let run = |shift: usize| {
            let tape = Tape::new();
            let bound = store.bind(&tape, false).unwrap();
            let t = tape.leaf(16, 4, data.clone(), false).unwrap();
            let mut rr = rng();
            dca_forward(&t, 4, 4, &p, &bound, shift, false, &mut rr).unwrap().data()
        };
        let plain = run(0);
        let shifted = run(2);
        assert_ne!(plain, shifted);
    }

    #[test]
    fn forward_grad_check() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let p = DcaParams::init(&mut store, "dca", 4, 2, 2, 0.0, &mut r).unwrap();
        // give the bias table some structure so its path is exercised
        for v in store.param_mut(p.bias_table).data.iter_mut() {
            *v = r.gen_range(-0.1..0.1);
        }
        let x = rand_vec(16 * 4, &mut r);
        let rep = grad_check(
            |tape, t| {
                let bound = store.bind(tape, false)?;
                let mut rr = ChaCha8Rng::seed_from_u64(0);
                Ok(dca_forward(&t, 4, 4, &p, &bound, 1, false, &mut rr)?.mean_all())
            },
            16,
            4,
            &x,
            1e-4,
        )
        .unwrap();
        assert!(rep.pass, "max rel err {}", rep.max_rel_err);
    }
}
