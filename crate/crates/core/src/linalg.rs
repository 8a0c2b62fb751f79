//! Dense and compressed-sparse-row matrices plus the product kernels shared
//! by the graph code and the autodiff tape.
//!
//! Storage is `f32`. Every reduction (dot products, row sums, sparse row
//! accumulation) runs in `f64` and rounds once at the end, in a fixed order,
//! so results do not depend on how work is scheduled.

use crate::error::{Error, Result};

/// Dense row-major `f32` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn scalar(v: f32) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value of a 1x1 matrix.
    pub fn item(&self) -> Option<f32> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Mean of the selected rows, accumulated in `f64`.
    pub fn row_mean(&self, idx: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.cols];
        for &i in idx {
            for (a, &v) in acc.iter_mut().zip(self.row(i)) {
                *a += v as f64;
            }
        }
        let n = idx.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn bitwise_eq(&self, other: &Matrix) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Matrix in compressed-sparse-row layout. Columns within a row are kept in
/// strictly increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f32>,
}

impl CsrMatrix {
    /// Build from raw parts, validating the layout.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(Error::InvalidGraph(format!(
                "row_offsets must have {} entries starting at 0",
                rows + 1
            )));
        }
        if row_offsets[rows] != col_indices.len() || values.len() != col_indices.len() {
            return Err(Error::InvalidGraph(
                "row_offsets, col_indices and values disagree in length".into(),
            ));
        }
        for r in 0..rows {
            let (s, e) = (row_offsets[r], row_offsets[r + 1]);
            if s > e {
                return Err(Error::InvalidGraph(format!("row_offsets decrease at row {r}")));
            }
            let cs = &col_indices[s..e];
            if cs.iter().any(|&c| c >= cols) {
                return Err(Error::InvalidGraph(format!("column out of range in row {r}")));
            }
            if cs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "columns in row {r} are not strictly increasing"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph("non-finite value".into()));
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut trips: Vec<(usize, usize, f32)>) -> Result<Self> {
        trips.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(trips.len());
        let mut values: Vec<f32> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            if r >= rows || c >= cols {
                return Err(Error::InvalidGraph(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::from_parts(rows, cols, row_offsets, col_indices, values)
    }

    /// Sparse view of a dense matrix, keeping exact nonzeros.
    pub fn from_dense(m: &Matrix) -> Self {
        let mut row_offsets = Vec::with_capacity(m.rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f32]) {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f32> {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).ok().map(|k| vals[k])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0f32; self.nnz()];
        for r in 0..self.rows {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                let k = next[c];
                col_indices[k] = r;
                values[k] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Keep the listed rows (in the given order), all columns.
    pub fn select_rows(&self, idx: &[usize]) -> CsrMatrix {
        let mut row_offsets = Vec::with_capacity(idx.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for &r in idx {
            let (cs, vs) = self.row(r);
            col_indices.extend_from_slice(cs);
            values.extend_from_slice(vs);
            row_offsets.push(col_indices.len());
        }
        CsrMatrix {
            rows: idx.len(),
            cols: self.cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Restrict to `row_idx` x `col_idx`. `col_idx` must be sorted ascending
    /// and cover every column referenced by the kept rows; columns are
    /// renumbered to positions within `col_idx`, preserving their order.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Result<CsrMatrix> {
        let mut row_offsets = Vec::with_capacity(row_idx.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for &r in row_idx {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                let pos = col_idx.binary_search(&c).map_err(|_| {
                    Error::InvalidGraph(format!("column {c} of row {r} missing from column set"))
                })?;
                col_indices.push(pos);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix {
            rows: row_idx.len(),
            cols: col_idx.len(),
            row_offsets,
            col_indices,
            values,
        })
    }
}

/// `a · b` for dense operands.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let n = b.cols();
    let mut out = Matrix::zeros(a.rows(), n);
    let mut acc = vec![0f64; n];
    for i in 0..a.rows() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (p, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let av = av as f64;
            for (s, &bv) in acc.iter_mut().zip(b.row(p)) {
                *s += av * bv as f64;
            }
        }
        for (o, s) in out.row_mut(i).iter_mut().zip(&acc) {
            *o = *s as f32;
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape(format!(
            "matmul_tn {}x{}ᵀ by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (k, n) = (a.cols(), b.cols());
    let mut acc = vec![0f64; k * n];
    for i in 0..a.rows() {
        let brow = b.row(i);
        for (p, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let av = av as f64;
            for (s, &bv) in acc[p * n..(p + 1) * n].iter_mut().zip(brow) {
                *s += av * bv as f64;
            }
        }
    }
    Ok(Matrix {
        rows: k,
        cols: n,
        data: acc.into_iter().map(|v| v as f32).collect(),
    })
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::shape(format!(
            "matmul_nt {}x{} by {}x{}ᵀ",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    // Streaming rows of the transposed operand is markedly faster than
    // row-by-row dot products for the wide shapes seen in backward passes.
    matmul(a, &b.transpose())
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    // Four independent lanes keep the loop vectorizable; the lane order is
    // fixed so the result is reproducible.
    let mut lanes = [0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            lanes[l] += a[4 * k + l] as f64 * b[4 * k + l] as f64;
        }
    }
    let mut tail = 0f64;
    for k in chunks * 4..a.len() {
        tail += a[k] as f64 * b[k] as f64;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// `s · d` with a sparse left operand.
pub fn spmm(s: &CsrMatrix, d: &Matrix) -> Result<Matrix> {
    if s.cols() != d.rows() {
        return Err(Error::shape(format!(
            "spmm {}x{} by {}x{}",
            s.rows(),
            s.cols(),
            d.rows(),
            d.cols()
        )));
    }
    let n = d.cols();
    let mut out = Matrix::zeros(s.rows(), n);
    let mut acc = vec![0f64; n];
    for r in 0..s.rows() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let (cs, vs) = s.row(r);
        for (&c, &v) in cs.iter().zip(vs) {
            let v = v as f64;
            for (a, &x) in acc.iter_mut().zip(d.row(c)) {
                *a += v * x as f64;
            }
        }
        for (o, a) in out.row_mut(r).iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0f64;
                for k in 0..a.cols() {
                    s += a.get(i, k) as f64 * b.get(k, j) as f64;
                }
                out.set(i, j, s as f32);
            }
        }
        out
    }

    fn sample(rows: usize, cols: usize, seed: u32) -> Matrix {
        let mut x = seed.wrapping_mul(2654435761).wrapping_add(12345);
        let data = (0..rows * cols)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 17;
                x ^= x << 5;
                if x % 5 == 0 {
                    0.0
                } else {
                    (x % 1000) as f32 / 500.0 - 1.0
                }
            })
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn products_agree_with_naive_loops() {
        let a = sample(5, 7, 1);
        let b = sample(7, 3, 2);
        let c = sample(5, 3, 3);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive(&a, &b)) < 1e-6);
        assert!(matmul_tn(&a, &c)
            .unwrap()
            .max_abs_diff(&naive(&a.transpose(), &c))
            < 1e-6);
        assert!(matmul_nt(&a, &a)
            .unwrap()
            .max_abs_diff(&naive(&a, &a.transpose()))
            < 1e-6);
        let s = CsrMatrix::from_dense(&a);
        assert!(spmm(&s, &b).unwrap().max_abs_diff(&naive(&a, &b)) < 1e-6);
        assert_eq!(s.to_dense(), a);
        assert_eq!(s.transpose().to_dense(), a.transpose());
    }

    #[test]
    fn shape_errors() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
        assert!(matches!(
            spmm(&CsrMatrix::from_dense(&a), &a),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn triplets_merge_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 0), Some(1.5));
        assert_eq!(m.get(0, 0), None);
    }

    #[test]
    fn submatrix_renumbers_columns() {
        let m = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (2, 2, 3.0)]).unwrap();
        let sub = m.submatrix(&[0], &[0, 2]).unwrap();
        assert_eq!(sub.to_dense(), Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap());
        assert!(m.submatrix(&[0], &[0]).is_err());
    }
}
