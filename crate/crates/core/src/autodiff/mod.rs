//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation executed through it. Values live on
//! the tape and are addressed by [`Var`] handles. Persistent parameters are
//! [`Tensor`]s: they are copied onto a tape with [`Tape::leaf`], and after
//! [`Tape::backward`] the returned [`Gradients`] are folded back into them
//! with [`Gradients::accumulate`]. Optimizers in [`optim`] then consume and
//! clear those gradient buffers.
//!
//! ```
//! use gcdm_core::autodiff::{Tape, Tensor};
//! use gcdm_core::linalg::Matrix;
//!
//! let mut w = Tensor::param(Matrix::filled(2, 2, 1.0));
//! let mut tape = Tape::new();
//! let x = tape.constant(Matrix::identity(2));
//! let wv = tape.leaf(&w);
//! let y = tape.matmul(x, wv).unwrap();
//! let loss = tape.sum(y).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! grads.accumulate(wv, &mut w).unwrap();
//! assert_eq!(w.grad().unwrap(), &Matrix::filled(2, 2, 1.0));
//! ```

mod ops;
pub mod optim;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

pub use optim::{Direction, OptimizerKind, OptimizerState};

/// Dense matrix with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    value: Matrix,
    requires_grad: bool,
    grad: Option<Matrix>,
}

impl Tensor {
    pub fn new(value: Matrix, requires_grad: bool) -> Self {
        Self {
            value,
            requires_grad,
            grad: None,
        }
    }

    /// Trainable tensor.
    pub fn param(value: Matrix) -> Self {
        Self::new(value, true)
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Matrix {
        &mut self.value
    }

    pub fn into_value(self) -> Matrix {
        self.value
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }

    pub fn take_grad(&mut self) -> Option<Matrix> {
        self.grad.take()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Add `g` into the gradient buffer, creating it on first use.
    pub fn accumulate_grad(&mut self, g: &Matrix) -> Result<()> {
        if g.shape() != self.value.shape() {
            return Err(Error::shape(format!(
                "gradient {:?} does not match tensor {:?}",
                g.shape(),
                self.value.shape()
            )));
        }
        match &mut self.grad {
            Some(buf) => buf.add_assign(g),
            None => self.grad = Some(g.clone()),
        }
        Ok(())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    index: usize,
    tape: u64,
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed)
}

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<CsrMatrix>, Var),
    Relu(Var),
    Sigmoid(Var),
    AddBias(Var, Var),
    ConcatCols(Var, Var),
    Axpby(Var, f32, Var, f32),
    Scale(Var, f32),
    Transpose(Var),
    Sum(Var),
    MaskedRowMean(Var, Arc<[usize]>),
    GatherRows(Var, Arc<[usize]>),
    SqL2Diff(Var, Var),
    SoftmaxCrossEntropy {
        logits: Var,
        rows: Vec<usize>,
        targets: Vec<usize>,
        probs: Matrix,
    },
    PairwiseSum(Var, Var),
    Reshape(Var),
    FillDiagonal(Var),
    GcnNormalize {
        input: Var,
        inv_sqrt_deg: Vec<f64>,
    },
    RowNormalize {
        input: Var,
        row_sums: Vec<f64>,
    },
    Dropout(Var, Vec<f32>),
}

pub(crate) struct Node {
    pub(crate) value: Matrix,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

/// Ordered record of executed operations.
///
/// The tape is single-threaded. It is cleared by [`Tape::backward`]; handles
/// created before that point are rejected afterwards.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: fresh_id(),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a copy of `t` as a leaf.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.input(t.value.clone(), t.requires_grad)
    }

    /// Record a constant (no gradient).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.input(value, false)
    }

    pub fn input(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push_node(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        })
    }

    pub fn value(&self, v: Var) -> Result<&Matrix> {
        self.check(v)?;
        Ok(&self.nodes[v.index].value)
    }

    pub fn requires_grad(&self, v: Var) -> Result<bool> {
        self.check(v)?;
        Ok(self.nodes[v.index].requires_grad)
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::TapeCleared);
        }
        Ok(())
    }

    pub(crate) fn node(&self, v: Var) -> &Node {
        &self.nodes[v.index]
    }

    fn push_node(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var {
            index: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    pub(crate) fn push(&mut self, name: &str, value: Matrix, inputs: &[Var], op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{name} produced a non-finite value")));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        Ok(self.push_node(Node {
            value,
            requires_grad,
            op,
        }))
    }

    /// Reverse pass from a 1x1 `loss`. Visits recorded operations in exact
    /// reverse order, then clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let (rows, cols) = self.nodes[loss.index].value.shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NotScalar { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.index).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
        }
        let tape = self.id;
        let leaves = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(n, g)| match (&n.op, n.requires_grad) {
                (Op::Leaf, true) => Some(g.unwrap_or_else(|| Matrix::zeros(n.value.rows(), n.value.cols()))),
                _ => None,
            })
            .collect();
        self.nodes.clear();
        self.id = fresh_id();
        Ok(Gradients { tape, grads: leaves })
    }
}

/// Leaf gradients produced by one backward pass.
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a leaf that required grad.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    /// Fold the gradient of leaf `v` into `t`'s buffer.
    pub fn accumulate(&self, v: Var, t: &mut Tensor) -> Result<()> {
        let g = self.get(v).ok_or(Error::GradNotComputed)?;
        t.accumulate_grad(g)
    }
}

#[cfg(test)]
#[path = "../../tests/support/oracle.rs"]
pub(crate) mod gradcheck;
