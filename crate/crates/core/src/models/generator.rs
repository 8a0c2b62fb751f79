use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::glorot;
use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Pairwise edge scorer `sigmoid(MLP([x_i; x_j]))` with one ReLU hidden
/// layer. The first-layer weight acting on the concatenated pair is kept as
/// its two row blocks, `w_i` for `x_i` and `w_j` for `x_j`, so that all
/// `N′²` pair activations come from two `N′ x hidden` products.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjGenParams {
    pub w_i: Tensor,
    pub w_j: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl AdjGenParams {
    pub fn init(feature_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        if feature_dim == 0 || hidden == 0 {
            return Err(Error::InvalidConfig("generator widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = glorot(&mut rng, 2 * feature_dim, hidden);
        let top: Vec<usize> = (0..feature_dim).collect();
        let bottom: Vec<usize> = (feature_dim..2 * feature_dim).collect();
        Ok(Self {
            w_i: Tensor::param(first.select_rows(&top)),
            w_j: Tensor::param(first.select_rows(&bottom)),
            b1: Tensor::param(Matrix::zeros(1, hidden)),
            w2: Tensor::param(glorot(&mut rng, hidden, 1)),
            b2: Tensor::param(Matrix::zeros(1, 1)),
        })
    }

    /// All-zero weights: every raw score is `sigmoid(0) = 0.5`.
    pub fn zeros(feature_dim: usize, hidden: usize) -> Self {
        Self {
            w_i: Tensor::param(Matrix::zeros(feature_dim, hidden)),
            w_j: Tensor::param(Matrix::zeros(feature_dim, hidden)),
            b1: Tensor::param(Matrix::zeros(1, hidden)),
            w2: Tensor::param(Matrix::zeros(hidden, 1)),
            b2: Tensor::param(Matrix::zeros(1, 1)),
        }
    }

    /// Width of the input pair, `2 d`.
    pub fn input_width(&self) -> usize {
        2 * self.w_i.value().rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_i.value().cols()
    }

    pub fn tensors(&self) -> [&Tensor; 5] {
        [&self.w_i, &self.w_j, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 5] {
        [&mut self.w_i, &mut self.w_j, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn bind(&self, tape: &mut Tape, track: bool) -> [Var; 5] {
        self.tensors()
            .map(|t| tape.input(t.value().clone(), track && t.requires_grad()))
    }

    pub fn accumulate(&mut self, grads: &Gradients, bound: &[Var; 5]) -> Result<()> {
        for (t, v) in self.tensors_mut().into_iter().zip(bound) {
            grads.accumulate(*v, t)?;
        }
        Ok(())
    }
}

/// Generated adjacency `A′` before normalization: pairwise sigmoid scores
/// `M`, symmetrized as `(M + Mᵀ) / 2`, with a unit diagonal.
pub fn generate_adjacency(tape: &mut Tape, params: &[Var; 5], xprime: Var) -> Result<Var> {
    let [w_i, w_j, b1, w2, b2] = *params;
    let n = tape.value(xprime)?.rows();
    if n == 0 {
        return Err(Error::shape("generator needs at least one synthetic node"));
    }
    let p = tape.matmul(xprime, w_i)?;
    let q = tape.matmul(xprime, w_j)?;
    let h = tape.pairwise_sum(p, q)?;
    let h = tape.add_bias(h, b1)?;
    let h = tape.relu(h)?;
    let s = tape.matmul(h, w2)?;
    let s = tape.add_bias(s, b2)?;
    let m = tape.reshape(s, n, n)?;
    let m = tape.sigmoid(m)?;
    let mt = tape.transpose(m)?;
    let sym = tape.axpby(m, 0.5, mt, 0.5)?;
    tape.fill_diagonal(sym, 1.0)
}

/// Value-only evaluation of [`generate_adjacency`].
pub fn generate_adjacency_value(params: &AdjGenParams, xprime: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let x = tape.constant(xprime.clone());
    let a = generate_adjacency(&mut tape, &bound, x)?;
    Ok(tape.value(a)?.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{self, Ref};

    #[test]
    fn zero_weights_give_one_half() {
        let g = AdjGenParams::zeros(3, 4);
        let x = Matrix::filled(4, 3, 0.7);
        let a = generate_adjacency_value(&g, &x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.5 };
                assert_eq!(a.get(i, j), expected);
            }
        }
    }

    #[test]
    fn symmetric_and_in_unit_interval() {
        let g = AdjGenParams::init(5, 8, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gradcheck::random(&mut rng, 6, 5, -2.0, 2.0);
        let a = generate_adjacency_value(&g, &x).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a.get(i, j).to_bits(), a.get(j, i).to_bits());
                if i != j {
                    assert!(a.get(i, j) > 0.0 && a.get(i, j) < 1.0);
                }
            }
        }
        assert_eq!(g.input_width(), 10);
    }

    #[test]
    fn permutation_equivariance() {
        let g = AdjGenParams::init(3, 6, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gradcheck::random(&mut rng, 5, 3, -1.0, 1.0);
        let perm = [3usize, 0, 4, 1, 2];
        let a = generate_adjacency_value(&g, &x).unwrap();
        let ap = generate_adjacency_value(&g, &x.select_rows(&perm)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(ap.get(i, j).to_bits(), a.get(perm[i], perm[j]).to_bits());
            }
        }
    }

    fn reference(x: &[Ref], n: usize) -> Ref {
        let p = x[0].matmul(&x[1]);
        let q = x[0].matmul(&x[2]);
        let m = p
            .pairwise_sum(&q)
            .add_bias(&x[3])
            .relu()
            .matmul(&x[4])
            .add_bias(&x[5])
            .reshape(n, n)
            .sigmoid();
        m.axpby(0.5, &m.transpose(), 0.5).fill_diagonal(1.0)
    }

    #[test]
    fn sum_of_adjacency_gradient() {
        // N′ = 4, d = 3; gradients with respect to X′ and every generator weight.
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = vec![
                gradcheck::random(&mut rng, 4, 3, -1.0, 1.0),
                gradcheck::random(&mut rng, 3, 5, -1.0, 1.0),
                gradcheck::random(&mut rng, 3, 5, -1.0, 1.0),
                gradcheck::random(&mut rng, 1, 5, 0.2, 0.6),
                gradcheck::random(&mut rng, 5, 1, -1.0, 1.0),
                gradcheck::random(&mut rng, 1, 1, -0.5, 0.5),
            ];
            gradcheck::check(
                "sum_adjacency",
                inputs,
                |t, v| {
                    let a = generate_adjacency(t, &[v[1], v[2], v[3], v[4], v[5]], v[0])?;
                    t.sum(a)
                },
                |x| Ref { r: 1, c: 1, d: vec![reference(x, 4).sum()] },
            );
        }
    }
}
