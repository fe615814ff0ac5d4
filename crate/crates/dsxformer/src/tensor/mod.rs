//! Dense 2-D tensor arithmetic with reverse-mode automatic differentiation.
//!
//! Every value is a row-major `[rows, cols]` matrix of f64; vectors are
//! `[1, n]` rows. A [`Tape`] owns all nodes created during one forward pass;
//! [`Tape::backward`] replays the recorded ops in reverse and accumulates
//! gradients into every node that (transitively) depends on a
//! `requires_grad` leaf. The tape is built eagerly per forward call and
//! dropped after backward.

mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, grad_check_multi, grad_check_sampled, GradReport};
pub use ops::ActKind;

use crate::error::{dim_err, num_err, Result};
use std::cell::RefCell;

#[derive(Clone)]
pub(crate) enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    Gelu(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    LayerNorm { x: usize, gamma: usize, beta: usize, eps: f64 },
    MeanRows(usize),
    MaxRows { x: usize, argmax: Vec<usize> },
    SumAll(usize),
    MeanAll(usize),
    Transpose(usize),
    SliceCols { x: usize, start: usize },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    GatherRows { x: usize, idx: Vec<Option<usize>> },
    GatherTableCol { table: usize, col: usize, idx: Vec<usize> },
    Reshape(usize),
}

pub(crate) struct Node {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub needs: bool,
    pub op: Op,
}

/// Records every op executed during a forward pass.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

/// Lightweight handle into a [`Tape`].
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    pub(crate) id: usize,
    pub(crate) tape: &'t Tape,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Tensor(id={}, shape=[{r}, {c}])", self.id)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, rows: usize, cols: usize, data: Vec<f64>, needs: bool, op: Op) -> Tensor<'_> {
        debug_assert_eq!(rows * cols, data.len());
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { rows, cols, data, grad: None, needs, op });
        Tensor { id, tape: self }
    }

    /// Creates a leaf tensor. `requires_grad` leaves receive a gradient
    /// accumulator during [`Tape::backward`].
    pub fn leaf(&self, rows: usize, cols: usize, data: Vec<f64>, requires_grad: bool) -> Result<Tensor<'_>> {
        if rows * cols != data.len() {
            return Err(dim_err!(
                "leaf shape [{rows}, {cols}] does not match data length {}",
                data.len()
            ));
        }
        Ok(self.push(rows, cols, data, requires_grad, Op::Leaf))
    }

    pub fn scalar(&self, v: f64) -> Tensor<'_> {
        self.push(1, 1, vec![v], false, Op::Leaf)
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Tensor<'_> {
        self.push(rows, cols, vec![0.0; rows * cols], false, Op::Leaf)
    }

    pub(crate) fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs
    }

    /// Reverse pass from a scalar loss. Seeds d(loss)/d(loss) = 1 and visits
    /// recorded ops in exact reverse execution order.
    pub fn backward(&self, loss: Tensor) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        let top = loss.id;
        {
            let l = &nodes[top];
            if l.rows * l.cols != 1 {
                return Err(dim_err!(
                    "backward requires a scalar loss, got [{}, {}]",
                    l.rows,
                    l.cols
                ));
            }
            if !l.data[0].is_finite() {
                return Err(num_err!("loss is not finite: {}", l.data[0]));
            }
        }
        for node in nodes.iter_mut() {
            if node.needs {
                node.grad = Some(vec![0.0; node.data.len()]);
            }
        }
        if let Some(g) = nodes[top].grad.as_mut() {
            g[0] = 1.0;
        }
        for i in (0..=top).rev() {
            if !nodes[i].needs {
                continue;
            }
            let gout = match nodes[i].grad.as_ref() {
                Some(g) => g.clone(),
                None => continue,
            };
            ops::backward_step(&mut nodes, i, &gout);
        }
        Ok(())
    }
}

impl<'t> Tensor<'t> {
    pub fn rows(&self) -> usize {
        self.tape.nodes.borrow()[self.id].rows
    }

    pub fn cols(&self) -> usize {
        self.tape.nodes.borrow()[self.id].cols
    }

    pub fn shape(&self) -> (usize, usize) {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.id];
        (n.rows, n.cols)
    }

    pub fn data(&self) -> Vec<f64> {
        self.tape.nodes.borrow()[self.id].data.clone()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tape.nodes.borrow()[self.id].grad.clone()
    }

    /// Scalar value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.id];
        assert_eq!(n.data.len(), 1, "item() on non-scalar tensor");
        n.data[0]
    }

    pub fn assert_finite(&self, what: &str) -> Result<()> {
        let nodes = self.tape.nodes.borrow();
        for &v in &nodes[self.id].data {
            if !v.is_finite() {
                return Err(num_err!("{what} contains a non-finite value ({v})"));
            }
        }
        Ok(())
    }
}
