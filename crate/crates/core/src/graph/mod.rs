//! Graph storage, propagation operators and receptive fields.

mod labels;

pub use labels::{class_partition, ClassPartition, LabelVector, SplitMasks};

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

/// Dense node-feature matrix (`N x d`).
pub type FeatureMatrix = Matrix;

/// Default cap on the node count accepted by [`densify`].
pub const DEFAULT_DENSE_CAP: usize = 10_000;

/// Square adjacency matrix in canonical CSR form.
///
/// Unweighted graphs store no weights and behave as if every edge weighs
/// `1.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    csr: CsrMatrix,
    weighted: bool,
}

impl SparseGraph {
    /// Build from raw CSR arrays. `values == None` marks an unweighted graph.
    pub fn from_csr(
        num_nodes: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Option<Vec<f32>>,
    ) -> Result<Self> {
        let weighted = values.is_some();
        let values = values.unwrap_or_else(|| vec![1.0; col_indices.len()]);
        let csr = CsrMatrix::from_parts(num_nodes, num_nodes, row_offsets, col_indices, values)?;
        Ok(Self { csr, weighted })
    }

    /// Build an undirected graph from an edge list. Both directions are
    /// stored; repeated or reversed duplicates collapse to one entry that
    /// keeps the largest weight.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize, f32)], weighted: bool) -> Result<Self> {
        let mut trips = Vec::with_capacity(edges.len() * 2);
        for &(s, d, w) in edges {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({s}, {d}) references a node outside 0..{num_nodes}"
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidGraph(format!("edge ({s}, {d}) has non-finite weight")));
            }
            trips.push((s, d, w));
            if s != d {
                trips.push((d, s, w));
            }
        }
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        trips.dedup_by(|next, kept| {
            if (next.0, next.1) == (kept.0, kept.1) {
                kept.2 = kept.2.max(next.2);
                true
            } else {
                false
            }
        });
        let csr = CsrMatrix::from_triplets(num_nodes, num_nodes, trips)?;
        Ok(Self { csr, weighted })
    }

    /// Graph with only unit self-loops.
    pub fn identity(num_nodes: usize) -> Self {
        let csr = CsrMatrix::from_parts(
            num_nodes,
            num_nodes,
            (0..=num_nodes).collect(),
            (0..num_nodes).collect(),
            vec![1.0; num_nodes],
        )
        .expect("identity layout is canonical");
        Self { csr, weighted: false }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.csr.rows()
    }

    /// Number of stored (directed) entries.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    /// Number of undirected edges, counting a self-loop once.
    pub fn num_undirected_edges(&self) -> usize {
        let mut n = 0;
        for r in 0..self.num_nodes() {
            n += self.neighbors(r).iter().filter(|&&c| c >= r).count();
        }
        n
    }

    pub fn row_offsets(&self) -> &[usize] {
        self.csr.row_offsets()
    }

    pub fn col_indices(&self) -> &[usize] {
        self.csr.col_indices()
    }

    pub fn values(&self) -> Option<&[f32]> {
        self.weighted.then(|| self.csr.values())
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn as_csr(&self) -> &CsrMatrix {
        &self.csr
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.csr.row(i).0
    }

    /// Weight of edge `(i, j)`, or `None` when absent.
    pub fn weight(&self, i: usize, j: usize) -> Option<f32> {
        self.csr.get(i, j)
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.num_nodes()).any(|i| self.weight(i, i).is_some())
    }

    /// First asymmetric entry, if any.
    pub fn asymmetry(&self) -> Option<(usize, usize)> {
        for r in 0..self.num_nodes() {
            let (cs, vs) = self.csr.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                match self.csr.get(c, r) {
                    Some(w) if w == v => {}
                    _ => return Some((r, c)),
                }
            }
        }
        None
    }

    /// Unique undirected edges `(src <= dst, weight)` in row-major order.
    pub fn undirected_edges(&self) -> Vec<(usize, usize, f32)> {
        let mut out = Vec::new();
        for r in 0..self.num_nodes() {
            let (cs, vs) = self.csr.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                if c >= r {
                    out.push((r, c, v));
                }
            }
        }
        out
    }

    /// Subgraph induced by `nodes`, renumbered to positions in `nodes`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<SparseGraph> {
        let mut pos = vec![usize::MAX; self.num_nodes()];
        for (k, &n) in nodes.iter().enumerate() {
            if n >= self.num_nodes() {
                return Err(Error::InvalidGraph(format!("node {n} out of range")));
            }
            pos[n] = k;
        }
        let mut trips = Vec::new();
        for (k, &n) in nodes.iter().enumerate() {
            let (cs, vs) = self.csr.row(n);
            for (&c, &v) in cs.iter().zip(vs) {
                if pos[c] != usize::MAX {
                    trips.push((k, pos[c], v));
                }
            }
        }
        Ok(SparseGraph {
            csr: CsrMatrix::from_triplets(nodes.len(), nodes.len(), trips)?,
            weighted: self.weighted,
        })
    }
}

/// Symmetric GCN operator `D^{-1/2} Â D^{-1/2}`, where `Â = A` or, when
/// `add_self_loops` is set, `A` with its diagonal replaced by ones.
pub fn normalize_adjacency(g: &SparseGraph, add_self_loops: bool) -> Result<SparseGraph> {
    if let Some((row, col)) = g.asymmetry() {
        return Err(Error::AsymmetricInput { row, col });
    }
    let n = g.num_nodes();
    let mut trips = Vec::with_capacity(g.nnz() + n);
    for r in 0..n {
        let (cs, vs) = g.csr.row(r);
        for (&c, &v) in cs.iter().zip(vs) {
            if !(add_self_loops && c == r) {
                trips.push((r, c, v));
            }
        }
        if add_self_loops {
            trips.push((r, r, 1.0));
        }
    }
    let aug = CsrMatrix::from_triplets(n, n, trips)?;
    let mut deg = vec![0f64; n];
    for (r, d) in deg.iter_mut().enumerate() {
        *d = aug.row(r).1.iter().map(|&v| v as f64).sum();
        if *d <= 0.0 {
            return Err(Error::ZeroDegree { node: r });
        }
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut values = aug.values().to_vec();
    for r in 0..n {
        let s = aug.row_offsets()[r];
        for (k, &c) in aug.row(r).0.iter().enumerate() {
            values[s + k] = (values[s + k] as f64 * inv_sqrt[r] * inv_sqrt[c]) as f32;
        }
    }
    SparseGraph::from_csr(
        n,
        aug.row_offsets().to_vec(),
        aug.col_indices().to_vec(),
        Some(values),
    )
}

/// Row-stochastic neighbour-mean operator `D^{-1} A` with self-loops
/// removed. Isolated nodes get an empty row (their neighbour mean is zero).
pub fn mean_neighbor_operator(g: &SparseGraph) -> CsrMatrix {
    let n = g.num_nodes();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(g.nnz());
    let mut values = Vec::with_capacity(g.nnz());
    row_offsets.push(0);
    for r in 0..n {
        let (cs, vs) = g.csr.row(r);
        let total: f64 = cs
            .iter()
            .zip(vs)
            .filter(|(&c, _)| c != r)
            .map(|(_, &v)| v as f64)
            .sum();
        if total > 0.0 {
            for (&c, &v) in cs.iter().zip(vs) {
                if c != r {
                    col_indices.push(c);
                    values.push((v as f64 / total) as f32);
                }
            }
        }
        row_offsets.push(col_indices.len());
    }
    CsrMatrix::from_parts(n, n, row_offsets, col_indices, values).expect("derived from canonical CSR")
}

/// Nodes within `hops` edges of `i`, including `i`, sorted ascending.
pub fn receptive_field(g: &SparseGraph, i: usize, hops: usize) -> Vec<usize> {
    receptive_field_of_set(g, &[i], hops)
}

/// Union of receptive fields of `seeds`, sorted ascending.
pub fn receptive_field_of_set(g: &SparseGraph, seeds: &[usize], hops: usize) -> Vec<usize> {
    let n = g.num_nodes();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &s in seeds {
        assert!(s < n, "seed node {s} out of range for {n} nodes");
        if dist[s] == usize::MAX {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    (0..n).filter(|&v| dist[v] != usize::MAX).collect()
}

/// Dense `N x N` adjacency (zeros for absent edges).
pub fn densify(g: &SparseGraph, cap: usize) -> Result<Matrix> {
    if g.num_nodes() > cap {
        return Err(Error::TooLargeToDensify {
            nodes: g.num_nodes(),
            cap,
        });
    }
    Ok(g.csr.to_dense())
}

/// Weighted graph holding the nonzero entries of a square dense matrix.
pub fn sparsify(m: &Matrix) -> Result<SparseGraph> {
    if m.rows() != m.cols() {
        return Err(Error::shape(format!("adjacency must be square, got {}x{}", m.rows(), m.cols())));
    }
    if !m.is_finite() {
        return Err(Error::InvalidGraph("non-finite adjacency entry".into()));
    }
    Ok(SparseGraph {
        csr: CsrMatrix::from_dense(m),
        weighted: true,
    })
}
