//! Coreset baselines: class-stratified subsets of the training nodes with
//! their induced subgraph.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::condense::class_quota;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{class_partition, FeatureMatrix, LabelVector, SparseGraph};
use crate::linalg::Matrix;
use crate::models::Arch;
use crate::train::{predict, train, TrainConfig, TrainGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoresetMethod {
    Random,
    Herding,
    KCenter,
}

impl fmt::Display for CoresetMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoresetMethod::Random => "random",
            CoresetMethod::Herding => "herding",
            CoresetMethod::KCenter => "kcenter",
        })
    }
}

impl FromStr for CoresetMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(CoresetMethod::Random),
            "herding" => Ok(CoresetMethod::Herding),
            "kcenter" | "k-center" => Ok(CoresetMethod::KCenter),
            other => Err(Error::InvalidConfig(format!("unknown coreset method '{other}'"))),
        }
    }
}

/// Selected training nodes (ascending) and the data restricted to them.
#[derive(Clone, Debug)]
pub struct CoresetResult {
    pub indices: Vec<usize>,
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub method: CoresetMethod,
}

impl CoresetResult {
    fn build(ds: &Dataset, mut indices: Vec<usize>, method: CoresetMethod) -> Result<Self> {
        indices.sort_unstable();
        Ok(Self {
            graph: ds.graph().induced_subgraph(&indices)?,
            features: ds.features().select_rows(&indices),
            labels: ds.labels().select(&indices),
            indices,
            method,
        })
    }

    pub fn train_graph(&self) -> Result<TrainGraph> {
        TrainGraph::new(&self.graph, &self.features, &self.labels)
    }
}

/// Per-class selection with the quota of the synthetic labels.
fn per_class(
    ds: &Dataset,
    n_prime: usize,
    mut pick: impl FnMut(&[usize], usize) -> Vec<usize>,
) -> Result<Vec<usize>> {
    let train = &ds.splits().train;
    let quota = class_quota(ds.labels(), train, n_prime)?;
    let part = class_partition(ds.labels(), train)?;
    let mut out = Vec::with_capacity(n_prime);
    for (c, &q) in quota.iter().enumerate() {
        let members = part.members(c);
        if q >= members.len() {
            out.extend_from_slice(members);
        } else if q > 0 {
            out.extend(pick(members, q));
        }
    }
    Ok(out)
}

/// Uniform sample within each class. A quota above the class size takes
/// the whole class.
pub fn select_random(ds: &Dataset, n_prime: usize, seed: u64) -> Result<CoresetResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = per_class(ds, n_prime, |members, q| {
        let mut m = members.to_vec();
        m.shuffle(&mut rng);
        m.truncate(q);
        m
    })?;
    CoresetResult::build(ds, idx, CoresetMethod::Random)
}

fn check_rows(ds: &Dataset, emb: &Matrix) -> Result<()> {
    if emb.rows() != ds.num_nodes() {
        return Err(Error::CountMismatch {
            what: "embedding rows".into(),
            expected: ds.num_nodes(),
            found: emb.rows(),
        });
    }
    Ok(())
}

fn class_mean(emb: &Matrix, members: &[usize]) -> Vec<f64> {
    emb.row_mean(members)
}

fn sq_dist(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| (x - y as f64).powi(2)).sum()
}

/// Greedy class-mean matching: each step adds the node whose inclusion
/// brings the mean of the selection closest to the class mean.
pub fn select_herding(ds: &Dataset, n_prime: usize, emb: &Matrix) -> Result<CoresetResult> {
    check_rows(ds, emb)?;
    let idx = per_class(ds, n_prime, |members, q| herd(emb, members, q))?;
    CoresetResult::build(ds, idx, CoresetMethod::Herding)
}

fn herd(emb: &Matrix, members: &[usize], q: usize) -> Vec<usize> {
    let mu = class_mean(emb, members);
    let mut sum = vec![0f64; emb.cols()];
    let mut taken = vec![false; members.len()];
    let mut out = Vec::with_capacity(q);
    for k in 1..=q {
        let mut best: Option<(usize, f64)> = None;
        for (p, &j) in members.iter().enumerate() {
            if taken[p] {
                continue;
            }
            let d: f64 = emb
                .row(j)
                .iter()
                .zip(&sum)
                .zip(&mu)
                .map(|((&e, &s), &m)| (m - (s + e as f64) / k as f64).powi(2))
                .sum();
            if best.map_or(true, |(_, b)| d < b) {
                best = Some((p, d));
            }
        }
        let (p, _) = best.expect("quota below class size");
        taken[p] = true;
        for (s, &e) in sum.iter_mut().zip(emb.row(members[p])) {
            *s += e as f64;
        }
        out.push(members[p]);
    }
    out
}

/// Greedy farthest-point selection seeded with the node nearest the class
/// mean.
pub fn select_kcenter(ds: &Dataset, n_prime: usize, emb: &Matrix) -> Result<CoresetResult> {
    check_rows(ds, emb)?;
    let idx = per_class(ds, n_prime, |members, q| kcenter(emb, members, q))?;
    CoresetResult::build(ds, idx, CoresetMethod::KCenter)
}

fn kcenter(emb: &Matrix, members: &[usize], q: usize) -> Vec<usize> {
    let mu = class_mean(emb, members);
    let first = argmin(members.iter().map(|&j| sq_dist(&mu, emb.row(j))));
    let mut out = vec![members[first]];
    let mut near: Vec<f64> = members.iter().map(|&j| point_dist(emb, j, members[first])).collect();
    near[first] = f64::NEG_INFINITY;
    while out.len() < q {
        let p = argmax(near.iter().copied());
        out.push(members[p]);
        for (k, &j) in members.iter().enumerate() {
            if near[k] != f64::NEG_INFINITY {
                near[k] = near[k].min(point_dist(emb, j, members[p]));
            }
        }
        near[p] = f64::NEG_INFINITY;
    }
    out
}

fn point_dist(emb: &Matrix, a: usize, b: usize) -> f64 {
    emb.row(a)
        .iter()
        .zip(emb.row(b))
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum()
}

/// First index of the minimum.
fn argmin(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, x) in xs.enumerate() {
        if x < best.1 {
            best = (k, x);
        }
    }
    best.0
}

/// First index of the maximum.
fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    argmin(xs.map(|x| -x))
}

/// Outputs of a 2-layer GCN trained on the original graph, used as the
/// selection space for herding and k-center.
pub fn gcn_embeddings(ds: &Dataset, cfg: &TrainConfig) -> Result<Matrix> {
    let spec = cfg.spec(Arch::Gcn);
    let out = train(&spec, &TrainGraph::from_dataset(ds), ds, cfg)?;
    predict(&out.params, &spec, ds)
}
