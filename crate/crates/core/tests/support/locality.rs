#![allow(dead_code)]
//! Receptive-field locality: perturbing features outside `R(i, L)` must not
//! change output row `i` at all.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gcdm_core::autodiff::Tape;
use gcdm_core::graph::{receptive_field, SparseGraph};
use gcdm_core::linalg::{CsrMatrix, Matrix};
use gcdm_core::models::{forward, init_params, Arch, GnnParams, GnnSpec, GraphOperators, Input, Mode, Plan};

pub const GRAPHS: u64 = 50;
pub const ARCHS: [Arch; 3] = [Arch::Gcn, Arch::Sgc, Arch::Sage];

pub fn random_graph(rng: &mut ChaCha8Rng) -> SparseGraph {
    let n = rng.gen_range(2..=100);
    // Sparse enough that most fields are proper subsets of the graph.
    let p = rng.gen_range(0.5..3.0) / n as f64;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p.min(1.0)) {
                edges.push((i, j, 1.0));
            }
        }
    }
    SparseGraph::from_edges(n, &edges, false).unwrap()
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn output(spec: &GnnSpec, params: &GnnParams, ops: &GraphOperators, x: &Matrix) -> Result<Matrix, String> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let input = Input::Sparse(Arc::new(CsrMatrix::from_dense(x)));
    let plan = Plan::full(ops, spec.hops());
    let out = forward(&mut tape, spec, &bound, &plan, &input, Mode::Eval).map_err(|e| e.to_string())?;
    Ok(tape.value(out).map_err(|e| e.to_string())?.clone())
}

/// Check one random graph for every architecture in [`ARCHS`] and every
/// `L` in 1..=3. Returns how many (arch, L, node) triples were checked.
pub fn check_graph(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_graph(&mut rng);
    let n = g.num_nodes();
    let d = 5;
    let ops = GraphOperators::new(&g).map_err(|e| e.to_string())?;
    let x = random_features(&mut rng, n, d);
    let mut checked = 0;
    for arch in ARCHS {
        for layers in 1..=3 {
            let spec = GnnSpec::new(arch).with_layers(layers).with_hidden(6).with_dropout(0.0);
            let params = init_params(&spec, d, 3, seed ^ layers as u64).map_err(|e| e.to_string())?;
            let base = output(&spec, &params, &ops, &x)?;
            // A few target nodes per graph keep the runtime small.
            for _ in 0..3 {
                let i = rng.gen_range(0..n);
                let field = receptive_field(&g, i, layers);
                let outside: Vec<usize> = (0..n).filter(|v| field.binary_search(v).is_err()).collect();
                if outside.is_empty() {
                    continue;
                }
                let mut xp = x.clone();
                for &v in &outside {
                    for k in 0..d {
                        xp.set(v, k, rng.gen_range(-10.0..10.0));
                    }
                }
                let pert = output(&spec, &params, &ops, &xp)?;
                let same = base.row(i).iter().zip(pert.row(i)).all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    return Err(format!("graph {seed}: {arch} L={layers} row {i} changed"));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}
