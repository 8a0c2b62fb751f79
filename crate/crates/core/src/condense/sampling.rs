use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{class_partition, FeatureMatrix, LabelVector};
use crate::linalg::Matrix;

/// Per-class synthetic node counts by largest-remainder apportionment of
/// `n_prime` over the class ratios of `train_mask`, then topped up so every
/// nonempty class has at least one node.
pub fn class_quota(y: &LabelVector, train_mask: &[usize], n_prime: usize) -> Result<Vec<usize>> {
    let part = class_partition(y, train_mask)?;
    let nonempty = part.nonempty_classes().count();
    if n_prime < nonempty {
        return Err(Error::TooFewSyntheticNodes {
            needed: nonempty,
            available: n_prime,
        });
    }
    let c = part.num_classes();
    let exact: Vec<f64> = part.ratios().iter().map(|r| r * n_prime as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut left = n_prime - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..c).collect();
    // Largest fractional part first; ties go to the lower class index.
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if part.ratio(k) > 0.0 {
            counts[k] += 1;
            left -= 1;
        }
    }
    for k in part.nonempty_classes().collect::<Vec<_>>() {
        if counts[k] == 0 {
            let donor = (0..c)
                .filter(|&j| counts[j] > 1)
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                .expect("n_prime covers every nonempty class");
            counts[donor] -= 1;
            counts[k] = 1;
        }
    }
    Ok(counts)
}

/// Synthetic labels `Y′`, grouped by class in ascending class order, with
/// counts from [`class_quota`]. The quota is deterministic, so no seed is
/// involved.
pub fn sample_labels(y: &LabelVector, train_mask: &[usize], n_prime: usize) -> Result<LabelVector> {
    let counts = class_quota(y, train_mask, n_prime)?;
    let labels = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat(c).take(k))
        .collect();
    LabelVector::new(labels, y.num_classes())
}

/// For each synthetic node, an original training node of the same class.
/// Within a class, sources are drawn without replacement until the class
/// is exhausted, then uniformly with replacement.
pub fn sample_sources(y: &LabelVector, train_mask: &[usize], yprime: &LabelVector, seed: u64) -> Result<Vec<usize>> {
    let part = class_partition(y, train_mask)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = (0..part.num_classes()).map(|c| part.members(c).to_vec()).collect();
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut used = vec![0usize; pools.len()];
    let mut sources = Vec::with_capacity(yprime.len());
    for &c in yprime.as_slice() {
        let pool = &pools[c];
        if pool.is_empty() {
            return Err(Error::EmptySourceClass { class: c });
        }
        let src = if used[c] < pool.len() {
            pool[used[c]]
        } else {
            pool[rng.gen_range(0..pool.len())]
        };
        used[c] += 1;
        sources.push(src);
    }
    Ok(sources)
}

/// Initial `X′`: each row copied from a training node of the matching class
/// (see [`sample_sources`]).
pub fn init_features(
    x: &FeatureMatrix,
    y: &LabelVector,
    train_mask: &[usize],
    yprime: &LabelVector,
    seed: u64,
) -> Result<Matrix> {
    let sources = sample_sources(y, train_mask, yprime, seed)?;
    Ok(x.select_rows(&sources))
}
