//! First-order optimizers over [`Tensor`] parameters.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Whether a step moves against the gradient or along it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Descend,
    Ascend,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
///
/// Weight decay is L2 added to the gradient. A step consumes the gradient
/// buffers of the parameters it updates; stepping a trainable parameter
/// whose gradient was never computed is an error.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    step_count: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr, 0.0)
    }

    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        Self::new(OptimizerKind::adam(), lr, weight_decay)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Drop moment buffers and the step counter.
    pub fn reset(&mut self) {
        self.step_count = 0;
        self.moments.clear();
    }

    /// Update every trainable tensor in `params`. The parameter list must
    /// keep the same order and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Tensor], dir: Direction) -> Result<()> {
        let trainable: Vec<usize> = (0..params.len()).filter(|&i| params[i].requires_grad()).collect();
        if trainable.iter().any(|&i| params[i].grad().is_none()) {
            return Err(Error::GradNotComputed);
        }
        if let OptimizerKind::Adam { .. } = self.kind {
            if self.moments.is_empty() {
                self.moments = trainable
                    .iter()
                    .map(|&i| {
                        let (r, c) = params[i].value().shape();
                        (Matrix::zeros(r, c), Matrix::zeros(r, c))
                    })
                    .collect();
            } else if self.moments.len() != trainable.len()
                || trainable
                    .iter()
                    .zip(&self.moments)
                    .any(|(&i, (m, _))| m.shape() != params[i].value().shape())
            {
                return Err(Error::shape("parameter list changed between optimizer steps"));
            }
        }
        self.step_count += 1;
        let sign = match dir {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        };
        let (lr, wd) = (self.lr, self.weight_decay);
        for (slot, &i) in trainable.iter().enumerate() {
            let p = &mut *params[i];
            let g = p.take_grad().expect("checked above");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &gv) in p.value_mut().data_mut().iter_mut().zip(g.data()) {
                        let ge = sign * gv as f64 + wd * *w as f64;
                        *w = (*w as f64 - lr * ge) as f32;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let t = self.step_count as i32;
                    let bc1 = 1.0 - beta1.powi(t);
                    let bc2 = 1.0 - beta2.powi(t);
                    let (m, v) = &mut self.moments[slot];
                    let w = p.value_mut().data_mut();
                    for k in 0..w.len() {
                        let ge = sign * g.data()[k] as f64 + wd * w[k] as f64;
                        let mk = beta1 * m.data()[k] as f64 + (1.0 - beta1) * ge;
                        let vk = beta2 * v.data()[k] as f64 + (1.0 - beta2) * ge * ge;
                        m.data_mut()[k] = mk as f32;
                        v.data_mut()[k] = vk as f32;
                        let update = lr * (mk / bc1) / ((vk / bc2).sqrt() + eps);
                        w[k] = (w[k] as f64 - update) as f32;
                    }
                }
            }
            if !p.value().is_finite() {
                return Err(Error::Numeric("optimizer step produced a non-finite parameter".into()));
            }
        }
        Ok(())
    }
}
