#![allow(dead_code)]
//! Gradient cases for every differentiable operation and for the composed
//! condensation loss. Each case draws its inputs from a seed and returns the
//! worst relative error reported by the oracle.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gcdm_core::autodiff::{Tape, Var};
use gcdm_core::condense::mmd_loss;
use gcdm_core::graph::{class_partition, LabelVector, SparseGraph};
use gcdm_core::linalg::CsrMatrix;
use gcdm_core::models::{forward, generate_adjacency, Arch, BoundParams, GnnSpec, GraphOperators, Input, Mode, Plan};
use gcdm_core::Result;

use super::oracle::{away_from_zero, check_result, random, Ref};

pub type Outcome = std::result::Result<f64, String>;
pub type Case = fn(u64) -> Outcome;

pub const SEEDS: u64 = 10;

fn max_of(results: impl IntoIterator<Item = Outcome>) -> Outcome {
    let mut worst = 0f64;
    for r in results {
        worst = worst.max(r?);
    }
    Ok(worst)
}

fn scalar(v: f64) -> Ref {
    Ref { r: 1, c: 1, d: vec![v] }
}

pub fn matmul(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    check_result(
        "matmul",
        vec![random(rng, 5, 4, -1.0, 1.0), random(rng, 4, 3, -1.0, 1.0)],
        |t, v| t.matmul(v[0], v[1]),
        |x| x[0].matmul(&x[1]),
    )
}

pub fn spmm(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let s = CsrMatrix::from_triplets(
        5,
        5,
        vec![(0, 1, 0.5), (1, 0, -1.0), (1, 3, 2.0), (2, 2, 0.3), (4, 4, 1.0), (4, 0, 0.7)],
    )
    .unwrap();
    let dense = Ref::from_matrix(&s.to_dense());
    let s = Arc::new(s);
    check_result(
        "spmm",
        vec![random(rng, 5, 4, -1.0, 1.0)],
        |t, v| t.spmm(&s, v[0]),
        |x| dense.matmul(&x[0]),
    )
}

pub fn relu_and_sigmoid(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    max_of([
        check_result("relu", vec![away_from_zero(rng, 5, 4)], |t, v| t.relu(v[0]), |x| x[0].relu()),
        check_result(
            "sigmoid",
            vec![random(rng, 5, 4, -3.0, 3.0)],
            |t, v| t.sigmoid(v[0]),
            |x| x[0].sigmoid(),
        ),
    ])
}

pub fn elementwise(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let a = random(rng, 5, 4, -1.0, 1.0);
    let b = random(rng, 1, 4, -1.0, 1.0);
    let c = random(rng, 5, 4, -1.0, 1.0);
    let d = random(rng, 5, 3, -1.0, 1.0);
    max_of([
        check_result(
            "add_bias",
            vec![a.clone(), b],
            |t, v| t.add_bias(v[0], v[1]),
            |x| x[0].add_bias(&x[1]),
        ),
        check_result(
            "concat_cols",
            vec![a.clone(), d],
            |t, v| t.concat_cols(v[0], v[1]),
            |x| x[0].concat_cols(&x[1]),
        ),
        check_result(
            "add",
            vec![a.clone(), c.clone()],
            |t, v| t.add(v[0], v[1]),
            |x| x[0].axpby(1.0, &x[1], 1.0),
        ),
        check_result(
            "axpby",
            vec![a.clone(), c],
            |t, v| t.axpby(v[0], 0.3, v[1], -1.7),
            |x| x[0].axpby(0.3, &x[1], -1.7),
        ),
        check_result("scale", vec![a.clone()], |t, v| t.scale(v[0], 2.5), |x| x[0].axpby(2.5, &x[0], 0.0)),
        check_result("transpose", vec![a], |t, v| t.transpose(v[0]), |x| x[0].transpose()),
    ])
}

pub fn sum_reduction(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    check_result("sum", vec![random(rng, 5, 4, -1.0, 1.0)], |t, v| t.sum(v[0]), |x| scalar(x[0].sum()))
}

pub fn row_selection(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let a = random(rng, 5, 4, -1.0, 1.0);
    max_of([
        check_result(
            "masked_row_mean",
            vec![a.clone()],
            |t, v| t.masked_row_mean(v[0], &[0, 2, 2, 4]),
            |x| x[0].row_mean(&[0, 2, 2, 4]),
        ),
        check_result(
            "gather_rows",
            vec![a],
            |t, v| t.gather_rows(v[0], &[4, 1, 1]),
            |x| x[0].gather_rows(&[4, 1, 1]),
        ),
    ])
}

pub fn sq_l2_diff(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    check_result(
        "sq_l2_diff",
        vec![random(rng, 1, 4, -1.0, 1.0), random(rng, 1, 4, -1.0, 1.0)],
        |t, v| t.sq_l2_diff(v[0], v[1]),
        |x| scalar(x[0].sq_l2_diff(&x[1])),
    )
}

pub fn softmax_cross_entropy(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let labels = vec![0, 2, 1, 2, 3];
    let y = LabelVector::new(labels.clone(), 4).unwrap();
    check_result(
        "softmax_ce",
        vec![random(rng, 5, 4, -2.0, 2.0)],
        |t, v| t.softmax_cross_entropy(v[0], &y, &[0, 1, 3, 4]),
        |x| scalar(x[0].softmax_ce(&labels, &[0, 1, 3, 4])),
    )
}

pub fn pairwise_and_reshape(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    max_of([
        check_result(
            "pairwise_sum",
            vec![random(rng, 5, 4, -1.0, 1.0), random(rng, 3, 4, -1.0, 1.0)],
            |t, v| t.pairwise_sum(v[0], v[1]),
            |x| x[0].pairwise_sum(&x[1]),
        ),
        check_result(
            "reshape",
            vec![random(rng, 5, 4, -1.0, 1.0)],
            |t, v| t.reshape(v[0], 2, 10),
            |x| x[0].reshape(2, 10),
        ),
    ])
}

pub fn adjacency_normalizers(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let a = random(rng, 5, 5, 0.1, 1.0);
    max_of([
        check_result(
            "fill_diagonal",
            vec![a.clone()],
            |t, v| t.fill_diagonal(v[0], 1.0),
            |x| x[0].fill_diagonal(1.0),
        ),
        check_result("gcn_normalize", vec![a], |t, v| t.gcn_normalize(v[0]), |x| x[0].gcn_normalize()),
        check_result(
            "row_normalize",
            vec![random(rng, 5, 4, 0.1, 1.0)],
            |t, v| t.row_normalize(v[0]),
            |x| x[0].row_normalize(),
        ),
    ])
}

pub fn dropout_mask(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<f32> = (0..20).map(|_| if rng.gen_bool(0.5) { 2.0 } else { 0.0 }).collect();
    let mask64: Vec<f64> = mask.iter().map(|&m| m as f64).collect();
    check_result(
        "dropout",
        vec![random(rng, 5, 4, -1.0, 1.0)],
        |t, v| t.dropout_mask(v[0], mask.clone()),
        |x| x[0].hadamard(&mask64),
    )
}

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    SparseGraph::from_edges(n, &edges, false).unwrap()
}

/// Cross-entropy of a two-layer GCN on a random sparse graph, with respect
/// to every weight.
pub fn gcn_cross_entropy(seed: u64) -> Outcome {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let labels_raw = vec![0, 1, 2, 1, 0, 2, 1, 0, 2, 1];
    let labels = LabelVector::new(labels_raw.clone(), 3).unwrap();
    let mask = vec![0, 2, 3, 5, 8];
    let g = random_graph(10, 0.3, rng);
    let ops = GraphOperators::new(&g).unwrap();
    let s = Ref::from_matrix(&ops.normalized.to_dense());
    let x = random(rng, 10, 4, -1.0, 1.0);
    let xr = Ref::from_matrix(&x);
    let xs = Arc::new(CsrMatrix::from_dense(&x));
    let spec = GnnSpec::new(Arch::Gcn).with_hidden(5).with_dropout(0.0);
    let plan = Plan::full(&ops, 2);
    let inputs = loop {
        let inputs = vec![
            random(rng, 4, 5, -1.0, 1.0),
            random(rng, 1, 5, -0.5, 0.5),
            random(rng, 5, 3, -1.0, 1.0),
            random(rng, 1, 3, -0.5, 0.5),
        ];
        let w0 = Ref::from_matrix(&inputs[0]);
        let b0 = Ref::from_matrix(&inputs[1]);
        let pre = s.matmul(&xr.matmul(&w0)).add_bias(&b0);
        if pre.d.iter().all(|z| z.abs() > 1e-2) {
            break inputs;
        }
    };
    check_result(
        "gcn_ce",
        inputs,
        |t, v| {
            let bound = BoundParams::from_vars(v.to_vec());
            let out = forward(t, &spec, &bound, &plan, &Input::Sparse(Arc::clone(&xs)), Mode::Eval)?;
            t.softmax_cross_entropy(out, &labels, &mask)
        },
        |w| {
            let h = s.matmul(&xr.matmul(&w[0])).add_bias(&w[1]).relu();
            let o = s.matmul(&h.matmul(&w[2])).add_bias(&w[3]);
            scalar(o.softmax_ce(&labels_raw, &mask))
        },
    )
}

/// Generator-shaped pipeline: pairwise MLP, sigmoid, symmetrize, unit
/// diagonal, GCN normalization, propagation.
pub fn generator_engine(t: &mut Tape, v: &[Var], n: usize) -> Result<Var> {
    let (x, wi, wj, w2) = (v[0], v[1], v[2], v[3]);
    let p = t.matmul(x, wi)?;
    let q = t.matmul(x, wj)?;
    let h = t.pairwise_sum(p, q)?;
    let h = t.relu(h)?;
    let s = t.matmul(h, w2)?;
    let m = t.reshape(s, n, n)?;
    let m = t.sigmoid(m)?;
    let mt = t.transpose(m)?;
    let sym = t.axpby(m, 0.5, mt, 0.5)?;
    let a = t.fill_diagonal(sym, 1.0)?;
    let a = t.gcn_normalize(a)?;
    t.matmul(a, x)
}

pub fn generator_reference(x: &[Ref], n: usize) -> Ref {
    let p = x[0].matmul(&x[1]);
    let q = x[0].matmul(&x[2]);
    let m = p.pairwise_sum(&q).relu().matmul(&x[3]).reshape(n, n).sigmoid();
    let a = m.axpby(0.5, &m.transpose(), 0.5).fill_diagonal(1.0).gcn_normalize();
    a.matmul(&x[0])
}

/// True when every generator pre-activation is clear of the ReLU kink, so
/// central differences are valid.
pub fn clear_of_kink(x: &Ref, wi: &Ref, wj: &Ref, b1: Option<&Ref>) -> bool {
    let mut pre = x.matmul(wi).pairwise_sum(&x.matmul(wj));
    if let Some(b) = b1 {
        pre = pre.add_bias(b);
    }
    pre.d.iter().all(|z| z.abs() > 1e-2)
}

/// The full condensation objective for one step: generator on `X′`, GCN
/// normalization of `A′`, a two-hop SGC embedding of the synthetic graph,
/// and the class-mean discrepancy against fixed original embeddings.
/// Differentiated with respect to `X′`, all five generator tensors and both
/// embedding tensors.
pub fn gcdm_loss(seed: u64) -> Outcome {
    let (n, d, h, e) = (4usize, 3usize, 5usize, 2usize);
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let yt_raw = vec![0, 1, 0, 1, 1, 0, 0];
    let ys_raw = vec![0, 1, 0, 1];
    let yt = LabelVector::new(yt_raw.clone(), 2).unwrap();
    let ys = LabelVector::new(ys_raw.clone(), 2).unwrap();
    let pt = class_partition(&yt, &(0..yt_raw.len()).collect::<Vec<_>>()).unwrap();
    let ps = class_partition(&ys, &(0..n).collect::<Vec<_>>()).unwrap();
    let emb_t = random(rng, yt_raw.len(), e, -1.0, 1.0);
    let emb_tr = Ref::from_matrix(&emb_t);
    let inputs = loop {
        let inputs = vec![
            random(rng, n, d, -1.0, 1.0),
            random(rng, d, h, -1.0, 1.0),
            random(rng, d, h, -1.0, 1.0),
            random(rng, 1, h, -0.3, 0.3),
            random(rng, h, 1, -1.0, 1.0),
            random(rng, 1, 1, -0.5, 0.5),
            random(rng, d, e, -1.0, 1.0),
            random(rng, 1, e, -0.5, 0.5),
        ];
        let r: Vec<Ref> = inputs.iter().map(Ref::from_matrix).collect();
        if clear_of_kink(&r[0], &r[1], &r[2], Some(&r[3])) {
            break inputs;
        }
    };
    let spec = GnnSpec::new(Arch::Sgc).with_dropout(0.0);
    let (pt, ps) = (&pt, &ps);
    check_result(
        "gcdm_loss",
        inputs,
        |t, v| {
            let a = generate_adjacency(t, &[v[1], v[2], v[3], v[4], v[5]], v[0])?;
            let a = t.gcn_normalize(a)?;
            let bound = BoundParams::from_vars(vec![v[6], v[7]]);
            let emb_s = forward(t, &spec, &bound, &Plan::dense(a, None, 2), &Input::Dense(v[0]), Mode::Eval)?;
            let et = t.constant(emb_t.clone());
            mmd_loss(t, et, emb_s, pt, ps)
        },
        |x| {
            let m = x[0]
                .matmul(&x[1])
                .pairwise_sum(&x[0].matmul(&x[2]))
                .add_bias(&x[3])
                .relu()
                .matmul(&x[4])
                .add_bias(&x[5])
                .reshape(n, n)
                .sigmoid();
            let a = m.axpby(0.5, &m.transpose(), 0.5).fill_diagonal(1.0).gcn_normalize();
            let emb_s = a.matmul(&a.matmul(&x[0].matmul(&x[6]))).add_bias(&x[7]);
            let mut l = 0.0;
            for c in 0..2 {
                let d = emb_tr.row_mean(pt.members(c)).sq_l2_diff(&emb_s.row_mean(ps.members(c)));
                l += pt.ratio(c) * d;
            }
            scalar(l)
        },
    )
}

/// Every case, in a fixed order.
pub fn all() -> Vec<(&'static str, Case)> {
    vec![
        ("matmul", matmul as Case),
        ("spmm", spmm),
        ("relu_and_sigmoid", relu_and_sigmoid),
        ("elementwise", elementwise),
        ("sum_reduction", sum_reduction),
        ("row_selection", row_selection),
        ("sq_l2_diff", sq_l2_diff),
        ("softmax_cross_entropy", softmax_cross_entropy),
        ("pairwise_and_reshape", pairwise_and_reshape),
        ("adjacency_normalizers", adjacency_normalizers),
        ("dropout_mask", dropout_mask),
        ("gcn_cross_entropy", gcn_cross_entropy),
        ("gcdm_loss", gcdm_loss),
    ]
}

/// Run one case over the standard seeds; returns the worst error.
pub fn run_seeds(case: Case) -> Outcome {
    max_of((0..SEEDS).map(case))
}
