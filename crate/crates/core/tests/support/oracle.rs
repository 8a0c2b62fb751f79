#![allow(dead_code)]

//! Finite-difference gradient oracle.
//!
//! Every engine operation has a plain f64 twin in [`Ref`]. Central
//! differences (h = 1e-3) of the twin give the reference gradient, which
//! the engine's analytic gradient must match. The error for one input is
//! `max |analytic - numeric| / max(max |numeric|, 1e-6)`: relative to the
//! gradient's own scale, so entries that are exactly zero in theory do not
//! blow up the ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gcdm_core::autodiff::{Tape, Var};
use gcdm_core::linalg::Matrix;
use gcdm_core::Result;

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-3;

/// Dense f64 matrix for reference computations.
#[derive(Clone, Debug)]
pub struct Ref {
    pub r: usize,
    pub c: usize,
    pub d: Vec<f64>,
}

impl Ref {
    pub fn from_matrix(m: &Matrix) -> Self {
        Ref {
            r: m.rows(),
            c: m.cols(),
            d: m.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn zeros(r: usize, c: usize) -> Self {
        Ref { r, c, d: vec![0.0; r * c] }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.c + j]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Ref {
        Ref {
            r: self.r,
            c: self.c,
            d: self.d.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn matmul(&self, b: &Ref) -> Ref {
        let mut o = Ref::zeros(self.r, b.c);
        for i in 0..self.r {
            for k in 0..self.c {
                for j in 0..b.c {
                    o.d[i * b.c + j] += self.at(i, k) * b.at(k, j);
                }
            }
        }
        o
    }

    pub fn relu(&self) -> Ref {
        self.map(|v| v.max(0.0))
    }

    pub fn sigmoid(&self) -> Ref {
        self.map(|v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn add_bias(&self, b: &Ref) -> Ref {
        let mut o = self.clone();
        for i in 0..self.r {
            for j in 0..self.c {
                o.d[i * self.c + j] += b.d[j];
            }
        }
        o
    }

    pub fn concat_cols(&self, b: &Ref) -> Ref {
        let mut o = Ref::zeros(self.r, self.c + b.c);
        for i in 0..self.r {
            for j in 0..self.c {
                o.d[i * o.c + j] = self.at(i, j);
            }
            for j in 0..b.c {
                o.d[i * o.c + self.c + j] = b.at(i, j);
            }
        }
        o
    }

    pub fn axpby(&self, alpha: f64, b: &Ref, beta: f64) -> Ref {
        let mut o = self.clone();
        for (x, &y) in o.d.iter_mut().zip(&b.d) {
            *x = alpha * *x + beta * y;
        }
        o
    }

    pub fn transpose(&self) -> Ref {
        let mut o = Ref::zeros(self.c, self.r);
        for i in 0..self.r {
            for j in 0..self.c {
                o.d[j * self.r + i] = self.at(i, j);
            }
        }
        o
    }

    pub fn sum(&self) -> f64 {
        self.d.iter().sum()
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Ref {
        let mut o = Ref::zeros(idx.len(), self.c);
        for (k, &i) in idx.iter().enumerate() {
            for j in 0..self.c {
                o.d[k * self.c + j] = self.at(i, j);
            }
        }
        o
    }

    pub fn row_mean(&self, idx: &[usize]) -> Ref {
        let g = self.gather_rows(idx);
        let mut o = Ref::zeros(1, self.c);
        for i in 0..g.r {
            for j in 0..g.c {
                o.d[j] += g.at(i, j) / idx.len() as f64;
            }
        }
        o
    }

    pub fn sq_l2_diff(&self, b: &Ref) -> f64 {
        self.d.iter().zip(&b.d).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    pub fn softmax_ce(&self, labels: &[usize], mask: &[usize]) -> f64 {
        let mut total = 0.0;
        for &i in mask {
            let row: Vec<f64> = (0..self.c).map(|j| self.at(i, j)).collect();
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            total += lse - row[labels[i]];
        }
        total / mask.len() as f64
    }

    pub fn pairwise_sum(&self, q: &Ref) -> Ref {
        let mut o = Ref::zeros(self.r * q.r, self.c);
        for i in 0..self.r {
            for j in 0..q.r {
                for k in 0..self.c {
                    o.d[(i * q.r + j) * self.c + k] = self.at(i, k) + q.at(j, k);
                }
            }
        }
        o
    }

    pub fn reshape(&self, r: usize, c: usize) -> Ref {
        Ref { r, c, d: self.d.clone() }
    }

    pub fn fill_diagonal(&self, v: f64) -> Ref {
        let mut o = self.clone();
        for i in 0..self.r {
            o.d[i * self.c + i] = v;
        }
        o
    }

    pub fn gcn_normalize(&self) -> Ref {
        let s: Vec<f64> = (0..self.r)
            .map(|i| 1.0 / (0..self.c).map(|j| self.at(i, j)).sum::<f64>().sqrt())
            .collect();
        let mut o = self.clone();
        for i in 0..self.r {
            for j in 0..self.c {
                o.d[i * self.c + j] *= s[i] * s[j];
            }
        }
        o
    }

    pub fn row_normalize(&self) -> Ref {
        let mut o = self.clone();
        for i in 0..self.r {
            let t: f64 = (0..self.c).map(|j| self.at(i, j)).sum();
            if t != 0.0 {
                for j in 0..self.c {
                    o.d[i * self.c + j] /= t;
                }
            }
        }
        o
    }

    pub fn hadamard(&self, m: &[f64]) -> Ref {
        let mut o = self.clone();
        o.d.iter_mut().zip(m).for_each(|(x, &y)| *x *= y);
        o
    }
}

pub fn random(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f32, hi: f32) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Entries bounded away from zero so relu kinks are not crossed.
pub fn away_from_zero(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    let data = (0..r * c)
        .map(|_| {
            let v: f32 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Matrix::from_vec(r, c, data).unwrap()
}

/// Fixed random projection used to turn a matrix output into a scalar with
/// non-uniform upstream gradients.
fn projection(cols: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    random(&mut rng, cols, 1, -1.0, 1.0)
}

/// Compare engine gradients of `engine` against finite differences of
/// `reference`. Both map the inputs to an output matrix; the harness reduces
/// it with the same projection. Returns the worst relative error over all
/// inputs, or a description of the first failure.
pub fn check_result<F, G>(name: &str, inputs: Vec<Matrix>, engine: F, reference: G) -> std::result::Result<f64, String>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    G: Fn(&[Ref]) -> Ref,
{
    let fail = |e: gcdm_core::Error| format!("{name}: {e}");
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.input(m.clone(), true)).collect();
    let out = engine(&mut tape, &vars).map_err(fail)?;
    let proj_m = projection(tape.value(out).map_err(fail)?.cols());
    let proj_r = Ref::from_matrix(&proj_m);
    let proj = tape.constant(proj_m);
    let y = tape.matmul(out, proj).map_err(fail)?;
    let loss = tape.sum(y).map_err(fail)?;
    let engine_loss = tape.value(loss).map_err(fail)?.get(0, 0) as f64;
    let grads = tape.backward(loss).map_err(fail)?;

    let base: Vec<Ref> = inputs.iter().map(Ref::from_matrix).collect();
    let f = |xs: &[Ref]| reference(xs).matmul(&proj_r).sum();
    let ref_loss = f(&base);
    if (engine_loss - ref_loss).abs() > 1e-4 * ref_loss.abs().max(1.0) {
        return Err(format!("{name}: forward {engine_loss} vs reference {ref_loss}"));
    }

    let mut worst = 0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).ok_or_else(|| format!("{name}: input {k} has no gradient"))?;
        let mut numeric = vec![0f64; base[k].d.len()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k].d[e] += H;
            minus[k].d[e] -= H;
            *slot = (f(&plus) - f(&minus)) / (2.0 * H);
        }
        let scale = numeric.iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-6);
        let err = analytic
            .data()
            .iter()
            .zip(&numeric)
            .fold(0f64, |m, (&a, &n)| m.max((a as f64 - n).abs()))
            / scale;
        if !(err < TOL) {
            return Err(format!("{name}: input {k} relative error {err:.2e}"));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Panicking form of [`check_result`].
pub fn check<F, G>(name: &str, inputs: Vec<Matrix>, engine: F, reference: G)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    G: Fn(&[Ref]) -> Ref,
{
    if let Err(msg) = check_result(name, inputs, engine, reference) {
        panic!("{msg}");
    }
}
