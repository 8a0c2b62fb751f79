//! Small synthetic datasets for tests and smoke runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::graph::{LabelVector, SparseGraph, SplitMasks};
use crate::linalg::Matrix;

/// Two disjoint 20-node cliques with features on disjoint halves of an
/// 8-dimensional space. Clique `k` is class `k`. Per clique, nodes 0..10 are
/// training nodes, 10..15 validation and 15..20 test.
pub fn two_cliques(seed: u64) -> Dataset {
    const SIZE: usize = 20;
    const DIM: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * SIZE;
    let mut edges = Vec::new();
    for k in 0..2 {
        let base = k * SIZE;
        for i in 0..SIZE {
            for j in i + 1..SIZE {
                edges.push((base + i, base + j, 1.0));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, &edges, false).expect("valid clique edges");
    let mut x = Matrix::zeros(n, DIM);
    let half = DIM / 2;
    for v in 0..n {
        let k = v / SIZE;
        for j in 0..half {
            x.set(v, k * half + j, rng.gen_range(0.5..1.5));
        }
    }
    let labels = LabelVector::new((0..n).map(|v| v / SIZE).collect(), 2).expect("two classes");
    let pick = |lo: usize, hi: usize| -> Vec<usize> {
        (0..2).flat_map(|k| (lo..hi).map(move |i| k * SIZE + i)).collect()
    };
    let splits = SplitMasks::new(pick(0, 10), pick(10, 15), pick(15, 20), n).expect("disjoint splits");
    Dataset::new("two-cliques", graph, x, labels, splits).expect("consistent fixture")
}
