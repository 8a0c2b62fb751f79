use std::sync::Arc;

use super::{Node, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::linalg::{self, CsrMatrix, Matrix};

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(buf) => buf.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Forward operations.
impl Tape {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = linalg::matmul(&self.node(a).value, &self.node(b).value)?;
        self.push("matmul", out, &[a, b], Op::MatMul(a, b))
    }

    /// Sparse constant operator times a dense value. No gradient flows into
    /// the operator's entries.
    pub fn spmm(&mut self, s: &Arc<CsrMatrix>, d: Var) -> Result<Var> {
        self.check(d)?;
        let out = linalg::spmm(s, &self.node(d).value)?;
        self.push("spmm", out, &[d], Op::SpMM(Arc::clone(s), d))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let mut out = self.node(a).value.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push("relu", out, &[a], Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let mut out = self.node(a).value.clone();
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = (1.0 / (1.0 + (-*v as f64).exp())) as f32);
        self.push("sigmoid", out, &[a], Op::Sigmoid(a))
    }

    /// Add a `1 x cols` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.check(a)?;
        self.check(bias)?;
        let (av, bv) = (&self.node(a).value, &self.node(bias).value);
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::shape(format!(
                "bias {:?} does not broadcast over {:?}",
                bv.shape(),
                av.shape()
            )));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push("add_bias", out, &[a, bias], Op::AddBias(a, bias))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        if av.rows() != bv.rows() {
            return Err(Error::shape(format!(
                "concat_cols {:?} with {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut data = Vec::with_capacity(av.rows() * (av.cols() + bv.cols()));
        for r in 0..av.rows() {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let out = Matrix::from_vec(av.rows(), av.cols() + bv.cols(), data)?;
        self.push("concat_cols", out, &[a, b], Op::ConcatCols(a, b))
    }

    /// `alpha * a + beta * b`.
    pub fn axpby(&mut self, a: Var, alpha: f32, b: Var, beta: f32) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        if av.shape() != bv.shape() {
            return Err(Error::shape(format!("axpby {:?} with {:?}", av.shape(), bv.shape())));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| (alpha as f64 * x as f64 + beta as f64 * y as f64) as f32)
            .collect();
        let out = Matrix::from_vec(av.rows(), av.cols(), data)?;
        self.push("axpby", out, &[a, b], Op::Axpby(a, alpha, b, beta))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.axpby(a, 1.0, b, 1.0)
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Result<Var> {
        self.check(a)?;
        let mut out = self.node(a).value.clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push("scale", out, &[a], Op::Scale(a, s))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.node(a).value.transpose();
        self.push("transpose", out, &[a], Op::Transpose(a))
    }

    /// Sum of all entries as a 1x1 value.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s: f64 = self.node(a).value.data().iter().map(|&v| v as f64).sum();
        self.push("sum", Matrix::scalar(s as f32), &[a], Op::Sum(a))
    }

    /// Mean of the rows listed in `idx`, as a `1 x cols` value.
    pub fn masked_row_mean(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        self.check(a)?;
        if idx.is_empty() {
            return Err(Error::EmptyMask);
        }
        let av = &self.node(a).value;
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows()) {
            return Err(Error::shape(format!("row {bad} out of range for {} rows", av.rows())));
        }
        let mean = av.row_mean(idx);
        let out = Matrix::from_vec(1, av.cols(), mean.into_iter().map(|v| v as f32).collect())?;
        self.push("masked_row_mean", out, &[a], Op::MaskedRowMean(a, idx.into()))
    }

    /// Rows of `a` in the order given by `idx`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        self.check(a)?;
        let av = &self.node(a).value;
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows()) {
            return Err(Error::shape(format!("row {bad} out of range for {} rows", av.rows())));
        }
        let out = av.select_rows(idx);
        self.push("gather_rows", out, &[a], Op::GatherRows(a, idx.into()))
    }

    /// `‖a − b‖²` for two `1 x k` rows.
    pub fn sq_l2_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        if av.rows() != 1 || av.shape() != bv.shape() {
            return Err(Error::shape(format!(
                "sq_l2_diff needs equal 1 x k rows, got {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let s: f64 = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum();
        self.push("sq_l2_diff", Matrix::scalar(s as f32), &[a, b], Op::SqL2Diff(a, b))
    }

    /// Mean softmax cross-entropy over the rows in `mask`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &LabelVector, mask: &[usize]) -> Result<Var> {
        self.check(logits)?;
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let lv = &self.node(logits).value;
        if lv.cols() != labels.num_classes() {
            return Err(Error::shape(format!(
                "{} logit columns for {} classes",
                lv.cols(),
                labels.num_classes()
            )));
        }
        if lv.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} logit rows for {} labels",
                lv.rows(),
                labels.len()
            )));
        }
        let mut probs = Matrix::zeros(mask.len(), lv.cols());
        let mut total = 0f64;
        let mut targets = Vec::with_capacity(mask.len());
        for (k, &r) in mask.iter().enumerate() {
            if r >= lv.rows() {
                return Err(Error::shape(format!("mask row {r} out of range")));
            }
            let row = lv.row(r);
            let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
            let denom: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
            let t = labels.get(r);
            total += denom.ln() + max - row[t] as f64;
            for (p, &v) in probs.row_mut(k).iter_mut().zip(row) {
                *p = ((v as f64 - max).exp() / denom) as f32;
            }
            targets.push(t);
        }
        let loss = Matrix::scalar((total / mask.len() as f64) as f32);
        self.push(
            "softmax_cross_entropy",
            loss,
            &[logits],
            Op::SoftmaxCrossEntropy {
                logits,
                rows: mask.to_vec(),
                targets,
                probs,
            },
        )
    }

    /// All pairwise row sums: output row `i * q.rows() + j` is `p_i + q_j`.
    pub fn pairwise_sum(&mut self, p: Var, q: Var) -> Result<Var> {
        self.check(p)?;
        self.check(q)?;
        let (pv, qv) = (&self.node(p).value, &self.node(q).value);
        if pv.cols() != qv.cols() {
            return Err(Error::shape(format!(
                "pairwise_sum {:?} with {:?}",
                pv.shape(),
                qv.shape()
            )));
        }
        let (n, m, h) = (pv.rows(), qv.rows(), pv.cols());
        let mut data = Vec::with_capacity(n * m * h);
        for i in 0..n {
            let pi = pv.row(i);
            for j in 0..m {
                data.extend(pi.iter().zip(qv.row(j)).map(|(&a, &b)| a + b));
            }
        }
        let out = Matrix::from_vec(n * m, h, data)?;
        self.push("pairwise_sum", out, &[p, q], Op::PairwiseSum(p, q))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        self.check(a)?;
        let av = &self.node(a).value;
        if av.rows() * av.cols() != rows * cols {
            return Err(Error::shape(format!("cannot reshape {:?} to {rows}x{cols}", av.shape())));
        }
        let out = Matrix::from_vec(rows, cols, av.data().to_vec())?;
        self.push("reshape", out, &[a], Op::Reshape(a))
    }

    /// Square matrix with its diagonal overwritten by `value`; the diagonal
    /// carries no gradient.
    pub fn fill_diagonal(&mut self, a: Var, value: f32) -> Result<Var> {
        self.check(a)?;
        let mut out = self.node(a).value.clone();
        if out.rows() != out.cols() {
            return Err(Error::shape(format!("fill_diagonal on {:?}", out.shape())));
        }
        for i in 0..out.rows() {
            out.set(i, i, value);
        }
        self.push("fill_diagonal", out, &[a], Op::FillDiagonal(a))
    }

    /// Dense `D^{-1/2} A D^{-1/2}` with `D` the row sums of `A`.
    pub fn gcn_normalize(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let av = &self.node(a).value;
        if av.rows() != av.cols() {
            return Err(Error::shape(format!("gcn_normalize on {:?}", av.shape())));
        }
        let n = av.rows();
        let mut inv_sqrt_deg = Vec::with_capacity(n);
        for r in 0..n {
            let d: f64 = av.row(r).iter().map(|&v| v as f64).sum();
            if d <= 0.0 {
                return Err(Error::ZeroDegree { node: r });
            }
            inv_sqrt_deg.push(1.0 / d.sqrt());
        }
        let mut out = av.clone();
        for r in 0..n {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v as f64 * inv_sqrt_deg[r] * inv_sqrt_deg[c]) as f32;
            }
        }
        self.push("gcn_normalize", out, &[a], Op::GcnNormalize { input: a, inv_sqrt_deg })
    }

    /// Divide each row by its sum; all-zero rows stay zero.
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let mut out = self.node(a).value.clone();
        let mut row_sums = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let s: f64 = out.row(r).iter().map(|&v| v as f64).sum();
            row_sums.push(s);
            if s != 0.0 {
                out.row_mut(r).iter_mut().for_each(|v| *v = (*v as f64 / s) as f32);
            }
        }
        self.push("row_normalize", out, &[a], Op::RowNormalize { input: a, row_sums })
    }

    /// Multiply elementwise by a fixed mask (inverted-dropout scaling is the
    /// caller's choice of mask values).
    pub fn dropout_mask(&mut self, a: Var, mask: Vec<f32>) -> Result<Var> {
        self.check(a)?;
        let mut out = self.node(a).value.clone();
        if mask.len() != out.data().len() {
            return Err(Error::shape("dropout mask length".to_string()));
        }
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.push("dropout", out, &[a], Op::Dropout(a, mask))
    }

    /// Route `g` (the gradient of node `idx`) into that node's inputs.
    pub(super) fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node: &Node = &self.nodes[idx];
        let wants = |v: &Var| self.nodes[v.index].requires_grad;
        let val = |v: &Var| &self.nodes[v.index].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    accumulate(&mut grads[a.index], linalg::matmul_nt(g, val(b))?);
                }
                if wants(b) {
                    accumulate(&mut grads[b.index], linalg::matmul_tn(val(a), g)?);
                }
            }
            Op::SpMM(s, d) => {
                if wants(d) {
                    accumulate(&mut grads[d.index], linalg::spmm(&s.transpose(), g)?);
                }
            }
            Op::Relu(a) => {
                let mut ga = g.clone();
                for (x, &o) in ga.data_mut().iter_mut().zip(node.value.data()) {
                    if o <= 0.0 {
                        *x = 0.0;
                    }
                }
                accumulate(&mut grads[a.index], ga);
            }
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                for (x, &o) in ga.data_mut().iter_mut().zip(node.value.data()) {
                    *x = (*x as f64 * o as f64 * (1.0 - o as f64)) as f32;
                }
                accumulate(&mut grads[a.index], ga);
            }
            Op::AddBias(a, b) => {
                if wants(a) {
                    accumulate(&mut grads[a.index], g.clone());
                }
                if wants(b) {
                    let mut acc = vec![0f64; g.cols()];
                    for r in 0..g.rows() {
                        for (s, &v) in acc.iter_mut().zip(g.row(r)) {
                            *s += v as f64;
                        }
                    }
                    let gb = Matrix::from_vec(1, g.cols(), acc.into_iter().map(|v| v as f32).collect())?;
                    accumulate(&mut grads[b.index], gb);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                if wants(a) {
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    }
                    accumulate(&mut grads[a.index], ga);
                }
                if wants(b) {
                    let mut gb = Matrix::zeros(g.rows(), g.cols() - ca);
                    for r in 0..g.rows() {
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(&mut grads[b.index], gb);
                }
            }
            Op::Axpby(a, alpha, b, beta) => {
                for (v, coef) in [(a, *alpha), (b, *beta)] {
                    if wants(v) {
                        let mut gv = g.clone();
                        gv.data_mut().iter_mut().for_each(|x| *x *= coef);
                        accumulate(&mut grads[v.index], gv);
                    }
                }
            }
            Op::Scale(a, s) => {
                let mut ga = g.clone();
                ga.data_mut().iter_mut().for_each(|x| *x *= *s);
                accumulate(&mut grads[a.index], ga);
            }
            Op::Transpose(a) => accumulate(&mut grads[a.index], g.transpose()),
            Op::Sum(a) => {
                let (r, c) = val(a).shape();
                accumulate(&mut grads[a.index], Matrix::filled(r, c, g.data()[0]));
            }
            Op::MaskedRowMean(a, idx) => {
                let (r, c) = val(a).shape();
                let mut ga = Matrix::zeros(r, c);
                let w = 1.0 / idx.len() as f64;
                for &i in idx.iter() {
                    for (x, &gv) in ga.row_mut(i).iter_mut().zip(g.row(0)) {
                        *x = (*x as f64 + gv as f64 * w) as f32;
                    }
                }
                accumulate(&mut grads[a.index], ga);
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = val(a).shape();
                let mut ga = Matrix::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for (x, &gv) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *x += gv;
                    }
                }
                accumulate(&mut grads[a.index], ga);
            }
            Op::SqL2Diff(a, b) => {
                let s = g.data()[0] as f64;
                let diff: Vec<f64> = val(a)
                    .data()
                    .iter()
                    .zip(val(b).data())
                    .map(|(&x, &y)| 2.0 * (x as f64 - y as f64) * s)
                    .collect();
                let k = diff.len();
                if wants(a) {
                    let ga = Matrix::from_vec(1, k, diff.iter().map(|&d| d as f32).collect())?;
                    accumulate(&mut grads[a.index], ga);
                }
                if wants(b) {
                    let gb = Matrix::from_vec(1, k, diff.iter().map(|&d| -d as f32).collect())?;
                    accumulate(&mut grads[b.index], gb);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                rows,
                targets,
                probs,
            } => {
                let (r, c) = val(logits).shape();
                let mut gl = Matrix::zeros(r, c);
                let scale = g.data()[0] as f64 / rows.len() as f64;
                for (k, (&row, &t)) in rows.iter().zip(targets).enumerate() {
                    let out = gl.row_mut(row);
                    for (j, &p) in probs.row(k).iter().enumerate() {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        out[j] = (out[j] as f64 + (p as f64 - onehot) * scale) as f32;
                    }
                }
                accumulate(&mut grads[logits.index], gl);
            }
            Op::PairwiseSum(p, q) => {
                let (n, h) = val(p).shape();
                let m = val(q).rows();
                if wants(p) {
                    let mut gp = vec![0f64; n * h];
                    for i in 0..n {
                        for j in 0..m {
                            for (s, &x) in gp[i * h..(i + 1) * h].iter_mut().zip(g.row(i * m + j)) {
                                *s += x as f64;
                            }
                        }
                    }
                    let gp = Matrix::from_vec(n, h, gp.into_iter().map(|v| v as f32).collect())?;
                    accumulate(&mut grads[p.index], gp);
                }
                if wants(q) {
                    let mut gq = vec![0f64; m * h];
                    for i in 0..n {
                        for j in 0..m {
                            for (s, &x) in gq[j * h..(j + 1) * h].iter_mut().zip(g.row(i * m + j)) {
                                *s += x as f64;
                            }
                        }
                    }
                    let gq = Matrix::from_vec(m, h, gq.into_iter().map(|v| v as f32).collect())?;
                    accumulate(&mut grads[q.index], gq);
                }
            }
            Op::Reshape(a) => {
                let (r, c) = val(a).shape();
                accumulate(&mut grads[a.index], Matrix::from_vec(r, c, g.data().to_vec())?);
            }
            Op::FillDiagonal(a) => {
                let mut ga = g.clone();
                for i in 0..ga.rows() {
                    ga.set(i, i, 0.0);
                }
                accumulate(&mut grads[a.index], ga);
            }
            Op::GcnNormalize { input, inv_sqrt_deg } => {
                // out_ij = a_ij s_i s_j with s = rowsum(a)^(-1/2).
                let a = val(input);
                let n = a.rows();
                let s = inv_sqrt_deg;
                let mut gs = vec![0f64; n];
                for i in 0..n {
                    let (ar, gr) = (a.row(i), g.row(i));
                    for j in 0..n {
                        let t = gr[j] as f64 * ar[j] as f64;
                        gs[i] += t * s[j];
                        gs[j] += t * s[i];
                    }
                }
                // ds_i / dd_i = -0.5 d_i^{-3/2} = -0.5 s_i^3
                let gd: Vec<f64> = (0..n).map(|i| -0.5 * s[i] * s[i] * s[i] * gs[i]).collect();
                let mut ga = Matrix::zeros(n, n);
                for i in 0..n {
                    let gr = g.row(i);
                    for (j, x) in ga.row_mut(i).iter_mut().enumerate() {
                        *x = (gr[j] as f64 * s[i] * s[j] + gd[i]) as f32;
                    }
                }
                accumulate(&mut grads[input.index], ga);
            }
            Op::RowNormalize { input, row_sums } => {
                let a = val(input);
                let mut ga = Matrix::zeros(a.rows(), a.cols());
                for (r, &t) in row_sums.iter().enumerate() {
                    if t == 0.0 {
                        continue;
                    }
                    let (ar, gr) = (a.row(r), g.row(r));
                    let dotv: f64 = ar.iter().zip(gr).map(|(&x, &y)| x as f64 * y as f64).sum();
                    for (j, x) in ga.row_mut(r).iter_mut().enumerate() {
                        *x = (gr[j] as f64 / t - dotv / (t * t)) as f32;
                    }
                }
                accumulate(&mut grads[input.index], ga);
            }
            Op::Dropout(a, mask) => {
                let mut ga = g.clone();
                for (x, &m) in ga.data_mut().iter_mut().zip(mask) {
                    *x *= m;
                }
                accumulate(&mut grads[a.index], ga);
            }
        }
        Ok(())
    }
}
