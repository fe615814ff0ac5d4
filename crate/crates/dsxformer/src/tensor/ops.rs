//! Forward op constructors and the per-node backward rules.

use super::{Node, Op, Tape, Tensor};
use crate::error::{cfg_err, dim_err, num_err, Result};

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2))
}

/// Activation selector for the nonlinearities the model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActKind {
    Relu,
    Sigmoid,
    Gelu,
}

impl std::str::FromStr for ActKind {
    type Err = crate::error::DsxError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(ActKind::Relu),
            "sigmoid" => Ok(ActKind::Sigmoid),
            "gelu" => Ok(ActKind::Gelu),
            other => Err(cfg_err!("unknown activation kind: {other:?}")),
        }
    }
}

impl<'t> Tensor<'t> {
    fn node_shape(&self, id: usize) -> (usize, usize) {
        let nodes = self.tape.nodes.borrow();
        (nodes[id].rows, nodes[id].cols)
    }

    /// C = A B with backward dA = dC Bt, dB = At dC.
    pub fn matmul(&self, rhs: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (m, k) = self.node_shape(self.id);
        let (k2, n) = self.node_shape(rhs.id);
        if k != k2 {
            return Err(dim_err!("matmul inner dims disagree: [{m}, {k}] x [{k2}, {n}]"));
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let b = &nodes[rhs.id].data;
            let mut c = vec![0.0; m * n];
            for i in 0..m {
                for t in 0..k {
                    let av = a[i * k + t];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &b[t * n..(t + 1) * n];
                    let crow = &mut c[i * n..(i + 1) * n];
                    for j in 0..n {
                        crow[j] += av * brow[j];
                    }
                }
            }
            c
        };
        let needs = self.tape.needs(self.id) || self.tape.needs(rhs.id);
        Ok(self.tape.push(m, n, out, needs, Op::Matmul(self.id, rhs.id)))
    }

    fn zip_same_shape(&self, rhs: &Tensor<'t>, name: &str) -> Result<(usize, usize)> {
        let (r1, c1) = self.node_shape(self.id);
        let (r2, c2) = self.node_shape(rhs.id);
        if (r1, c1) != (r2, c2) {
            return Err(dim_err!("{name} shape mismatch: [{r1}, {c1}] vs [{r2}, {c2}]"));
        }
        Ok((r1, c1))
    }

    pub fn add(&self, rhs: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (r, c) = self.zip_same_shape(rhs, "add")?;
        let out = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id]
                .data
                .iter()
                .zip(&nodes[rhs.id].data)
                .map(|(a, b)| a + b)
                .collect()
        };
        let needs = self.tape.needs(self.id) || self.tape.needs(rhs.id);
        Ok(self.tape.push(r, c, out, needs, Op::Add(self.id, rhs.id)))
    }

    pub fn sub(&self, rhs: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (r, c) = self.zip_same_shape(rhs, "sub")?;
        let out = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id]
                .data
                .iter()
                .zip(&nodes[rhs.id].data)
                .map(|(a, b)| a - b)
                .collect()
        };
        let needs = self.tape.needs(self.id) || self.tape.needs(rhs.id);
        Ok(self.tape.push(r, c, out, needs, Op::Sub(self.id, rhs.id)))
    }

    pub fn mul(&self, rhs: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (r, c) = self.zip_same_shape(rhs, "mul")?;
        let out = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id]
                .data
                .iter()
                .zip(&nodes[rhs.id].data)
                .map(|(a, b)| a * b)
                .collect()
        };
        let needs = self.tape.needs(self.id) || self.tape.needs(rhs.id);
        Ok(self.tape.push(r, c, out, needs, Op::Mul(self.id, rhs.id)))
    }

    /// Broadcast-add a `[1, c]` row vector to every row.
    pub fn add_row(&self, v: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (r, c) = self.node_shape(self.id);
        let (vr, vc) = self.node_shape(v.id);
        if vr != 1 || vc != c {
            return Err(dim_err!("add_row expects [1, {c}] vector, got [{vr}, {vc}]"));
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let b = &nodes[v.id].data;
            let mut o = a.clone();
            for i in 0..r {
                for j in 0..c {
                    o[i * c + j] += b[j];
                }
            }
            o
        };
        let needs = self.tape.needs(self.id) || self.tape.needs(v.id);
        Ok(self.tape.push(r, c, out, needs, Op::AddRow(self.id, v.id)))
    }

    /// Broadcast-multiply every row by a `[1, c]` row vector.
    pub fn mul_row(&self, v: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (r, c) = self.node_shape(self.id);
        let (vr, vc) = self.node_shape(v.id);
        if vr != 1 || vc != c {
            return Err(dim_err!("mul_row expects [1, {c}] vector, got [{vr}, {vc}]"));
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let b = &nodes[v.id].data;
            let mut o = a.clone();
            for i in 0..r {
                for j in 0..c {
                    o[i * c + j] *= b[j];
                }
            }
            o
        };
        let needs = self.tape.needs(self.id) || self.tape.needs(v.id);
        Ok(self.tape.push(r, c, out, needs, Op::MulRow(self.id, v.id)))
    }

    pub fn scale(&self, s: f64) -> Tensor<'t> {
        let (r, c) = self.node_shape(self.id);
        let out: Vec<f64> = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].data.iter().map(|a| a * s).collect()
        };
        let needs = self.tape.needs(self.id);
        self.tape.push(r, c, out, needs, Op::Scale(self.id, s))
    }

    pub fn activation(&self, kind: ActKind) -> Result<Tensor<'t>> {
        self.assert_finite("activation input")?;
        Ok(match kind {
            ActKind::Relu => self.unary(Op::Relu(self.id), |x| x.max(0.0)),
            ActKind::Sigmoid => self.unary(Op::Sigmoid(self.id), |x| 1.0 / (1.0 + (-x).exp())),
            // Exact-Phi GELU: x * Phi(x).
            ActKind::Gelu => self.unary(Op::Gelu(self.id), |x| x * phi(x)),
        })
    }

    pub fn relu(&self) -> Result<Tensor<'t>> {
        self.activation(ActKind::Relu)
    }

    pub fn sigmoid(&self) -> Result<Tensor<'t>> {
        self.activation(ActKind::Sigmoid)
    }

    pub fn gelu(&self) -> Result<Tensor<'t>> {
        self.activation(ActKind::Gelu)
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Tensor<'t> {
        let (r, c) = self.node_shape(self.id);
        let out: Vec<f64> = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].data.iter().map(|&x| f(x)).collect()
        };
        let needs = self.tape.needs(self.id);
        self.tape.push(r, c, out, needs, op)
    }

    /// Row-wise softmax with max-subtraction for stability.
    pub fn softmax_rows(&self) -> Result<Tensor<'t>> {
        self.assert_finite("softmax input")?;
        let (r, c) = self.node_shape(self.id);
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let mut o = vec![0.0; r * c];
            for i in 0..r {
                let row = &a[i * c..(i + 1) * c];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for j in 0..c {
                    let e = (row[j] - m).exp();
                    o[i * c + j] = e;
                    s += e;
                }
                for j in 0..c {
                    o[i * c + j] /= s;
                }
            }
            o
        };
        let needs = self.tape.needs(self.id);
        Ok(self.tape.push(r, c, out, needs, Op::SoftmaxRows(self.id)))
    }

    /// Row-wise log-softmax, computed directly from shifted logits.
    pub fn log_softmax_rows(&self) -> Result<Tensor<'t>> {
        self.assert_finite("log_softmax input")?;
        let (r, c) = self.node_shape(self.id);
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let mut o = vec![0.0; r * c];
            for i in 0..r {
                let row = &a[i * c..(i + 1) * c];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln() + m;
                for j in 0..c {
                    o[i * c + j] = row[j] - lse;
                }
            }
            o
        };
        let needs = self.tape.needs(self.id);
        Ok(self.tape.push(r, c, out, needs, Op::LogSoftmaxRows(self.id)))
    }

    /// Per-row normalization over the last axis, then scale/shift by
    /// `[1, c]` gamma and beta.
    pub fn layer_norm(&self, gamma: &Tensor<'t>, beta: &Tensor<'t>, eps: f64) -> Result<Tensor<'t>> {
        if eps <= 0.0 {
            return Err(cfg_err!("layer_norm eps must be positive, got {eps}"));
        }
        self.assert_finite("layer_norm input")?;
        let (r, c) = self.node_shape(self.id);
        for (t, name) in [(gamma, "gamma"), (beta, "beta")] {
            let (tr, tc) = self.node_shape(t.id);
            if tr != 1 || tc != c {
                return Err(dim_err!("layer_norm {name} must be [1, {c}], got [{tr}, {tc}]"));
            }
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].data;
            let g = &nodes[gamma.id].data;
            let b = &nodes[beta.id].data;
            let mut o = vec![0.0; r * c];
            for i in 0..r {
                let row = &x[i * c..(i + 1) * c];
                let mean = row.iter().sum::<f64>() / c as f64;
                let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                let inv = 1.0 / (var + eps).sqrt();
                for j in 0..c {
                    o[i * c + j] = (row[j] - mean) * inv * g[j] + b[j];
                }
            }
            o
        };
        let needs =
            self.tape.needs(self.id) || self.tape.needs(gamma.id) || self.tape.needs(beta.id);
        Ok(self.tape.push(
            r,
            c,
            out,
            needs,
            Op::LayerNorm { x: self.id, gamma: gamma.id, beta: beta.id, eps },
        ))
    }

    /// Column means: `[r, c] -> [1, c]`.
    pub fn mean_rows(&self) -> Result<Tensor<'t>> {
        let (r, c) = self.node_shape(self.id);
        if r == 0 {
            return Err(num_err!("mean_rows on empty tensor"));
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let mut o = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    o[j] += a[i * c + j];
                }
            }
            for v in o.iter_mut() {
                *v /= r as f64;
            }
            o
        };
        let needs = self.tape.needs(self.id);
        Ok(self.tape.push(1, c, out, needs, Op::MeanRows(self.id)))
    }

    /// Column maxima: `[r, c] -> [1, c]`. Backward routes to the argmax row
    /// (first winner on ties).
    pub fn max_rows(&self) -> Result<Tensor<'t>> {
        let (r, c) = self.node_shape(self.id);
        if r == 0 {
            return Err(num_err!("max_rows on empty tensor"));
        }
        let (out, argmax) = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let mut o = vec![f64::NEG_INFINITY; c];
            let mut am = vec![0usize; c];
            for i in 0..r {
                for j in 0..c {
                    if a[i * c + j] > o[j] {
                        o[j] = a[i * c + j];
                        am[j] = i;
                    }
                }
            }
            (o, am)
        };
        let needs = self.tape.needs(self.id);
        Ok(self
            .tape
            .push(1, c, out, needs, Op::MaxRows { x: self.id, argmax }))
    }

    pub fn sum_all(&self) -> Tensor<'t> {
        let out = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].data.iter().sum::<f64>()
        };
        let needs = self.tape.needs(self.id);
        self.tape.push(1, 1, vec![out], needs, Op::SumAll(self.id))
    }

    pub fn mean_all(&self) -> Tensor<'t> {
        let (r, c) = self.node_shape(self.id);
        let out = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].data.iter().sum::<f64>() / (r * c) as f64
        };
        let needs = self.tape.needs(self.id);
        self.tape.push(1, 1, vec![out], needs, Op::MeanAll(self.id))
    }

    pub fn transpose(&self) -> Tensor<'t> {
        let (r, c) = self.node_shape(self.id);
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let mut o = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    o[j * r + i] = a[i * c + j];
                }
            }
            o
        };
        let needs = self.tape.needs(self.id);
        self.tape.push(c, r, out, needs, Op::Transpose(self.id))
    }

    /// Columns `[start, start+len)` of every row.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor<'t>> {
        let (r, c) = self.node_shape(self.id);
        if start + len > c {
            return Err(dim_err!(
                "slice_cols [{start}, {}) out of range for {c} columns",
                start + len
            ));
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let mut o = Vec::with_capacity(r * len);
            for i in 0..r {
                o.extend_from_slice(&a[i * c + start..i * c + start + len]);
            }
            o
        };
        let needs = self.tape.needs(self.id);
        Ok(self
            .tape
            .push(r, len, out, needs, Op::SliceCols { x: self.id, start }))
    }

    /// Row selection with optional zero-fill: `idx[i] = None` yields a zero
    /// row, `Some(j)` copies source row `j`. Backward scatter-adds.
    pub fn gather_rows(&self, idx: &[Option<usize>]) -> Result<Tensor<'t>> {
        let (r, c) = self.node_shape(self.id);
        for &i in idx.iter().flatten() {
            if i >= r {
                return Err(dim_err!("gather_rows index {i} out of range for {r} rows"));
            }
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            let mut o = vec![0.0; idx.len() * c];
            for (k, &i) in idx.iter().enumerate() {
                if let Some(i) = i {
                    o[k * c..(k + 1) * c].copy_from_slice(&a[i * c..(i + 1) * c]);
                }
            }
            o
        };
        let needs = self.tape.needs(self.id);
        Ok(self.tape.push(
            idx.len(),
            c,
            out,
            needs,
            Op::GatherRows { x: self.id, idx: idx.to_vec() },
        ))
    }

    /// Builds an `[out_rows, idx.len()/out_rows]` matrix whose entry `k` is
    /// `table[idx[k], col]`. Used for relative-position bias lookup.
    pub fn gather_table_col(&self, col: usize, idx: &[usize], out_rows: usize) -> Result<Tensor<'t>> {
        let (r, c) = self.node_shape(self.id);
        if col >= c {
            return Err(dim_err!("gather_table_col column {col} out of range for {c} columns"));
        }
        if idx.len() % out_rows != 0 {
            return Err(dim_err!(
                "gather_table_col index count {} not divisible by {out_rows} rows",
                idx.len()
            ));
        }
        for &i in idx {
            if i >= r {
                return Err(dim_err!("gather_table_col index {i} out of range for {r} rows"));
            }
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].data;
            idx.iter().map(|&i| a[i * c + col]).collect()
        };
        let needs = self.tape.needs(self.id);
        Ok(self.tape.push(
            out_rows,
            idx.len() / out_rows,
            out,
            needs,
            Op::GatherTableCol { table: self.id, col, idx: idx.to_vec() },
        ))
    }

    /// Row-major reinterpretation; element count must be preserved.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Tensor<'t>> {
        let (r, c) = self.node_shape(self.id);
        if rows * cols != r * c {
            return Err(dim_err!("reshape [{r}, {c}] -> [{rows}, {cols}] changes element count"));
        }
        let out = self.tape.nodes.borrow()[self.id].data.clone();
        let needs = self.tape.needs(self.id);
        Ok(self.tape.push(rows, cols, out, needs, Op::Reshape(self.id)))
    }
}

impl Tape {
    /// Horizontal concatenation of tensors with equal row counts.
    pub fn concat_cols<'t>(&'t self, parts: &[Tensor<'t>]) -> Result<Tensor<'t>> {
        if parts.is_empty() {
            return Err(dim_err!("concat_cols of zero tensors"));
        }
        let nodes = self.nodes.borrow();
        let r = nodes[parts[0].id].rows;
        let mut total_c = 0;
        for p in parts {
            if nodes[p.id].rows != r {
                return Err(dim_err!(
                    "concat_cols row mismatch: {} vs {}",
                    r,
                    nodes[p.id].rows
                ));
            }
            total_c += nodes[p.id].cols;
        }
        let mut out = vec![0.0; r * total_c];
        let mut off = 0;
        for p in parts {
            let c = nodes[p.id].cols;
            for i in 0..r {
                out[i * total_c + off..i * total_c + off + c]
                    .copy_from_slice(&nodes[p.id].data[i * c..(i + 1) * c]);
            }
            off += c;
        }
        let needs = parts.iter().any(|p| nodes[p.id].needs);
        drop(nodes);
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(self.push(r, total_c, out, needs, Op::ConcatCols(ids)))
    }

    /// Vertical concatenation of tensors with equal column counts.
    pub fn concat_rows<'t>(&'t self, parts: &[Tensor<'t>]) -> Result<Tensor<'t>> {
        if parts.is_empty() {
            return Err(dim_err!("concat_rows of zero tensors"));
        }
        let nodes = self.nodes.borrow();
        let c = nodes[parts[0].id].cols;
        let mut total_r = 0;
        for p in parts {
            if nodes[p.id].cols != c {
                return Err(dim_err!(
                    "concat_rows column mismatch: {} vs {}",
                    c,
                    nodes[p.id].cols
                ));
            }
            total_r += nodes[p.id].rows;
        }
        let mut out = Vec::with_capacity(total_r * c);
        for p in parts {
            out.extend_from_slice(&nodes[p.id].data);
        }
        let needs = parts.iter().any(|p| nodes[p.id].needs);
        drop(nodes);
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(self.push(total_r, c, out, needs, Op::ConcatRows(ids)))
    }
}

/// Accumulates `gout` (the gradient at node `i`) into the grads of node
/// `i`'s inputs. Inputs always precede `i` on the tape.
pub(crate) fn backward_step(nodes: &mut [Node], i: usize, gout: &[f64]) {
    let op = nodes[i].op.clone();
    match op {
        Op::Leaf => {}
        Op::Matmul(a, b) => {
            let (m, k) = (nodes[a].rows, nodes[a].cols);
            let n = nodes[b].cols;
            if nodes[a].grad.is_some() {
                let bdat = nodes[b].data.clone();
                let ga = nodes[a].grad.as_mut().unwrap();
                // dA = dC B^T
                for r in 0..m {
                    for t in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += gout[r * n + j] * bdat[t * n + j];
                        }
                        ga[r * k + t] += s;
                    }
                }
            }
            if nodes[b].grad.is_some() {
                let adat = nodes[a].data.clone();
                let gb = nodes[b].grad.as_mut().unwrap();
                // dB = A^T dC
                for t in 0..k {
                    for j in 0..n {
                        let mut s = 0.0;
                        for r in 0..m {
                            s += adat[r * k + t] * gout[r * n + j];
                        }
                        gb[t * n + j] += s;
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for id in [a, b] {
                if let Some(g) = nodes[id].grad.as_mut() {
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                }
            }
        }
        Op::Sub(a, b) => {
            if let Some(g) = nodes[a].grad.as_mut() {
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi += go;
                }
            }
            if let Some(g) = nodes[b].grad.as_mut() {
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi -= go;
                }
            }
        }
        Op::Mul(a, b) => {
            if nodes[a].grad.is_some() {
                let bdat = nodes[b].data.clone();
                let ga = nodes[a].grad.as_mut().unwrap();
                for k in 0..gout.len() {
                    ga[k] += gout[k] * bdat[k];
                }
            }
            if nodes[b].grad.is_some() {
                let adat = nodes[a].data.clone();
                let gb = nodes[b].grad.as_mut().unwrap();
                for k in 0..gout.len() {
                    gb[k] += gout[k] * adat[k];
                }
            }
        }
        Op::AddRow(a, v) => {
            let c = nodes[v].cols;
            if let Some(g) = nodes[a].grad.as_mut() {
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi += go;
                }
            }
            if let Some(g) = nodes[v].grad.as_mut() {
                for (k, &go) in gout.iter().enumerate() {
                    g[k % c] += go;
                }
            }
        }
        Op::MulRow(a, v) => {
            let c = nodes[v].cols;
            if nodes[a].grad.is_some() {
                let vdat = nodes[v].data.clone();
                let ga = nodes[a].grad.as_mut().unwrap();
                for (k, &go) in gout.iter().enumerate() {
                    ga[k] += go * vdat[k % c];
                }
            }
            if nodes[v].grad.is_some() {
                let adat = nodes[a].data.clone();
                let gv = nodes[v].grad.as_mut().unwrap();
                for (k, &go) in gout.iter().enumerate() {
                    gv[k % c] += go * adat[k];
                }
            }
        }
        Op::Scale(a, s) => {
            if let Some(g) = nodes[a].grad.as_mut() {
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi += go * s;
                }
            }
        }
        Op::Relu(a) => {
            if nodes[a].grad.is_some() {
                let x = nodes[a].data.clone();
                let g = nodes[a].grad.as_mut().unwrap();
                for k in 0..gout.len() {
                    if x[k] > 0.0 {
                        g[k] += gout[k];
                    }
                }
            }
        }
        Op::Sigmoid(a) => {
            if nodes[a].grad.is_some() {
                let y = nodes[i].data.clone();
                let g = nodes[a].grad.as_mut().unwrap();
                for k in 0..gout.len() {
                    g[k] += gout[k] * y[k] * (1.0 - y[k]);
                }
            }
        }
        Op::Gelu(a) => {
            if nodes[a].grad.is_some() {
                let x = nodes[a].data.clone();
                let g = nodes[a].grad.as_mut().unwrap();
                for k in 0..gout.len() {
                    let pdf = (-0.5 * x[k] * x[k]).exp() * INV_SQRT_2PI;
                    g[k] += gout[k] * (phi(x[k]) + x[k] * pdf);
                }
            }
        }
        Op::SoftmaxRows(a) => {
            if nodes[a].grad.is_some() {
                let y = nodes[i].data.clone();
                let c = nodes[i].cols;
                let r = nodes[i].rows;
                let g = nodes[a].grad.as_mut().unwrap();
                for row in 0..r {
                    let yr = &y[row * c..(row + 1) * c];
                    let gr = &gout[row * c..(row + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        g[row * c + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
        }
        Op::LogSoftmaxRows(a) => {
            if nodes[a].grad.is_some() {
                let y = nodes[i].data.clone();
                let c = nodes[i].cols;
                let r = nodes[i].rows;
                let g = nodes[a].grad.as_mut().unwrap();
                for row in 0..r {
                    let gr = &gout[row * c..(row + 1) * c];
                    let gsum: f64 = gr.iter().sum();
                    for j in 0..c {
                        g[row * c + j] += gr[j] - y[row * c + j].exp() * gsum;
                    }
                }
            }
        }
        Op::LayerNorm { x, gamma, beta, eps } => {
            let c = nodes[i].cols;
            let r = nodes[i].rows;
            let xdat = nodes[x].data.clone();
            let gdat = nodes[gamma].data.clone();
            for row in 0..r {
                let xr = &xdat[row * c..(row + 1) * c];
                let gr = &gout[row * c..(row + 1) * c];
                let mean = xr.iter().sum::<f64>() / c as f64;
                let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                let inv = 1.0 / (var + eps).sqrt();
                let xhat: Vec<f64> = xr.iter().map(|&v| (v - mean) * inv).collect();
                if nodes[x].grad.is_some() {
                    // dxhat = dy * gamma; dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
                    let dxhat: Vec<f64> = (0..c).map(|j| gr[j] * gdat[j]).collect();
                    let m1 = dxhat.iter().sum::<f64>() / c as f64;
                    let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    let gx = nodes[x].grad.as_mut().unwrap();
                    for j in 0..c {
                        gx[row * c + j] += inv * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                if nodes[gamma].grad.is_some() {
                    let gg = nodes[gamma].grad.as_mut().unwrap();
                    for j in 0..c {
                        gg[j] += gr[j] * xhat[j];
                    }
                }
                if let Some(gb) = nodes[beta].grad.as_mut() {
                    for j in 0..c {
                        gb[j] += gr[j];
                    }
                }
            }
        }
        Op::MeanRows(a) => {
            if nodes[a].grad.is_some() {
                let r = nodes[a].rows;
                let c = nodes[a].cols;
                let g = nodes[a].grad.as_mut().unwrap();
                let inv = 1.0 / r as f64;
                for row in 0..r {
                    for j in 0..c {
                        g[row * c + j] += gout[j] * inv;
                    }
                }
            }
        }
        Op::MaxRows { x, argmax } => {
            if nodes[x].grad.is_some() {
                let c = nodes[x].cols;
                let g = nodes[x].grad.as_mut().unwrap();
                for (j, &row) in argmax.iter().enumerate() {
                    g[row * c + j] += gout[j];
                }
            }
        }
        Op::SumAll(a) => {
            if let Some(g) = nodes[a].grad.as_mut() {
                for gi in g.iter_mut() {
                    *gi += gout[0];
                }
            }
        }
        Op::MeanAll(a) => {
            if let Some(g) = nodes[a].grad.as_mut() {
                let inv = 1.0 / g.len() as f64;
                for gi in g.iter_mut() {
                    *gi += gout[0] * inv;
                }
            }
        }
        Op::Transpose(a) => {
            if nodes[a].grad.is_some() {
                let r = nodes[a].rows;
                let c = nodes[a].cols;
                let g = nodes[a].grad.as_mut().unwrap();
                for row in 0..r {
                    for j in 0..c {
                        g[row * c + j] += gout[j * r + row];
                    }
                }
            }
        }
        Op::SliceCols { x, start } => {
            if nodes[x].grad.is_some() {
                let c = nodes[x].cols;
                let len = nodes[i].cols;
                let r = nodes[i].rows;
                let g = nodes[x].grad.as_mut().unwrap();
                for row in 0..r {
                    for j in 0..len {
                        g[row * c + start + j] += gout[row * len + j];
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total_c = nodes[i].cols;
            let r = nodes[i].rows;
            let mut off = 0;
            for p in parts {
                let c = nodes[p].cols;
                if let Some(g) = nodes[p].grad.as_mut() {
                    for row in 0..r {
                        for j in 0..c {
                            g[row * c + j] += gout[row * total_c + off + j];
                        }
                    }
                }
                off += c;
            }
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for p in parts {
                let len = nodes[p].data.len();
                if let Some(g) = nodes[p].grad.as_mut() {
                    for k in 0..len {
                        g[k] += gout[off + k];
                    }
                }
                off += len;
            }
        }
        Op::GatherRows { x, idx } => {
            if nodes[x].grad.is_some() {
                let c = nodes[x].cols;
                let g = nodes[x].grad.as_mut().unwrap();
                for (k, &i_src) in idx.iter().enumerate() {
                    if let Some(i_src) = i_src {
                        for j in 0..c {
                            g[i_src * c + j] += gout[k * c + j];
                        }
                    }
                }
            }
        }
        Op::GatherTableCol { table, col, idx } => {
            if nodes[table].grad.is_some() {
                let c = nodes[table].cols;
                let g = nodes[table].grad.as_mut().unwrap();
                for (k, &i_src) in idx.iter().enumerate() {
                    g[i_src * c + col] += gout[k];
                }
            }
        }
        Op::Reshape(a) => {
            if let Some(g) = nodes[a].grad.as_mut() {
                for (gi, &go) in g.iter_mut().zip(gout) {
                    *gi += go;
                }
            }
        }
    }
}
