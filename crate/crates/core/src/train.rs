//! Supervised training and evaluation of node classifiers.
//!
//! Models are trained on any labelled graph (the original, a condensed
//! graph or a coreset), selected by accuracy on the original validation
//! split and scored on the original test split.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Direction, OptimizerState, Tape};
use crate::condense::CondensedGraph;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{LabelVector, SparseGraph};
use crate::linalg::{CsrMatrix, Matrix};
use crate::models::{forward, init_params, Arch, GnnParams, GnnSpec, GraphOperators, Input, Mode, Plan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Stop after this many epochs without a new best validation accuracy.
    pub patience: usize,
    /// Depth of the evaluated models.
    pub layers: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 600,
            lr: 1e-2,
            weight_decay: 5e-4,
            dropout: 0.5,
            patience: 100,
            layers: 2,
            hidden: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.patience > self.epochs {
            return Err(Error::InvalidConfig(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("lr must be positive and weight decay non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Spec for `arch` with this config's depth, width and dropout.
    pub fn spec(&self, arch: Arch) -> GnnSpec {
        GnnSpec::new(arch)
            .with_layers(self.layers)
            .with_hidden(self.hidden)
            .with_dropout(self.dropout)
    }
}

#[derive(Clone, Debug)]
enum Features {
    Sparse(Arc<CsrMatrix>),
    Dense(Matrix),
}

/// A labelled graph to train on.
#[derive(Clone, Debug)]
pub struct TrainGraph {
    ops: GraphOperators,
    features: Features,
    labels: LabelVector,
    mask: Vec<usize>,
}

impl TrainGraph {
    /// The original graph, supervised on its training split.
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self {
            ops: ds.operators().clone(),
            features: Features::Sparse(Arc::clone(ds.sparse_features())),
            labels: ds.labels().clone(),
            mask: ds.splits().train.clone(),
        }
    }

    /// Every node labelled and supervised.
    pub fn new(graph: &SparseGraph, features: &Matrix, labels: &LabelVector) -> Result<Self> {
        if features.rows() != graph.num_nodes() || labels.len() != graph.num_nodes() {
            return Err(Error::CountMismatch {
                what: "training graph rows".into(),
                expected: graph.num_nodes(),
                found: features.rows().min(labels.len()),
            });
        }
        Ok(Self {
            ops: GraphOperators::new(graph)?,
            features: Features::Dense(features.clone()),
            labels: labels.clone(),
            mask: (0..graph.num_nodes()).collect(),
        })
    }

    pub fn from_condensed(cg: &CondensedGraph) -> Result<Self> {
        Self::new(&cg.graph, &cg.features, &cg.labels)
    }

    fn input(&self, tape: &mut Tape) -> Input {
        match &self.features {
            Features::Sparse(s) => Input::Sparse(Arc::clone(s)),
            Features::Dense(m) => Input::Dense(tape.constant(m.clone())),
        }
    }

    fn num_features(&self) -> usize {
        match &self.features {
            Features::Sparse(s) => s.cols(),
            Features::Dense(m) => m.cols(),
        }
    }
}

/// What [`train`] returns.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: GnnParams,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val: f64,
    /// Validation accuracy of every epoch run.
    pub val_curve: Vec<f64>,
}

/// Tracks the best validation accuracy; ties keep the earlier epoch.
#[derive(Clone, Debug, Default)]
pub struct BestTracker {
    best: Option<(usize, f64)>,
    since: usize,
}

impl BestTracker {
    /// Record the accuracy of `epoch`. Returns true if it is the new best.
    pub fn observe(&mut self, epoch: usize, acc: f64) -> bool {
        match self.best {
            Some((_, b)) if acc <= b => {
                self.since += 1;
                false
            }
            _ => {
                self.best = Some((epoch, acc));
                self.since = 0;
                true
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    /// Epochs since the last improvement.
    pub fn stale(&self) -> usize {
        self.since
    }
}

/// Train `spec` by full-batch cross-entropy with Adam, keeping the
/// parameters of the epoch with the best accuracy on the validation split
/// of `original`.
pub fn train(spec: &GnnSpec, data: &TrainGraph, original: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let val = &original.splits().val;
    if val.is_empty() {
        return Err(Error::EmptyMask);
    }
    if data.num_features() != original.num_features() {
        return Err(Error::shape(format!(
            "training features have {} columns, original has {}",
            data.num_features(),
            original.num_features()
        )));
    }
    let classes = original.num_classes();
    let mut params = init_params(spec, data.num_features(), classes, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d20f);
    let mut opt = OptimizerState::adam(cfg.lr, cfg.weight_decay);
    let train_plan = Plan::full(&data.ops, spec.hops());
    let mut tracker = BestTracker::default();
    let mut best = params.clone();
    let mut curve = Vec::new();
    for epoch in 1..=cfg.epochs {
        let ctx = |e: Error| e.with_context(format!("training epoch {epoch}"));
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true);
        let input = data.input(&mut tape);
        let logits = forward(&mut tape, spec, &bound, &train_plan, &input, Mode::Train(&mut rng)).map_err(ctx)?;
        let loss = tape.softmax_cross_entropy(logits, &data.labels, &data.mask).map_err(ctx)?;
        let grads = tape.backward(loss)?;
        params.accumulate(&grads, &bound)?;
        opt.step(&mut params.tensors_mut(), Direction::Descend).map_err(ctx)?;

        let acc = evaluate(&params, spec, original, val)?;
        curve.push(acc);
        if tracker.observe(epoch, acc) {
            best = params.clone();
        }
        if tracker.stale() >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_val) = tracker.best().expect("at least one epoch");
    Ok(TrainOutcome {
        params: best,
        best_epoch,
        best_val,
        val_curve: curve,
    })
}

/// Final-layer outputs on the whole original graph (eval mode).
pub fn predict(params: &GnnParams, spec: &GnnSpec, ds: &Dataset) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let plan = Plan::full(ds.operators(), spec.hops());
    let input = Input::Sparse(Arc::clone(ds.sparse_features()));
    let out = forward(&mut tape, spec, &bound, &plan, &input, Mode::Eval)?;
    Ok(tape.value(out)?.clone())
}

/// Percentage of `mask` whose argmax prediction (ties to the lowest class)
/// equals the label.
pub fn accuracy(logits: &Matrix, labels: &LabelVector, mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let correct = mask
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let mut arg = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = k;
                }
            }
            arg == labels.get(i)
        })
        .count();
    correct as f64 / mask.len() as f64 * 100.0
}

/// Accuracy of `params` on `mask` of the original graph.
pub fn evaluate(params: &GnnParams, spec: &GnnSpec, ds: &Dataset, mask: &[usize]) -> Result<f64> {
    let logits = predict(params, spec, ds)?;
    Ok(accuracy(&logits, ds.labels(), mask))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub best_val: f64,
    pub val_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchReport {
    pub arch: Arch,
    pub runs: Vec<RunResult>,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
}

impl ArchReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_accuracy).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ArchReport>,
}

impl EvalReport {
    pub fn get(&self, arch: Arch) -> Option<&ArchReport> {
        self.rows.iter().find(|r| r.arch == arch)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train each architecture `repeats` times on `data` (seeds `cfg.seed`,
/// `cfg.seed + 1`, ...) and test on the original graph.
pub fn cross_arch_eval(
    data: &TrainGraph,
    ds: &Dataset,
    archs: &[Arch],
    cfg: &TrainConfig,
    repeats: usize,
) -> Result<EvalReport> {
    cross_arch_eval_threaded(data, ds, archs, cfg, repeats, 1)
}

fn single_run(data: &TrainGraph, ds: &Dataset, arch: Arch, cfg: &TrainConfig, r: usize) -> Result<RunResult> {
    let spec = cfg.spec(arch);
    let run_cfg = TrainConfig {
        seed: cfg.seed + r as u64,
        ..cfg.clone()
    };
    let out = train(&spec, data, ds, &run_cfg)?;
    let test_accuracy = evaluate(&out.params, &spec, ds, &ds.splits().test)?;
    Ok(RunResult {
        seed: run_cfg.seed,
        test_accuracy,
        best_epoch: out.best_epoch,
        best_val: out.best_val,
        val_curve: out.val_curve,
    })
}

/// [`cross_arch_eval`] with the independent runs spread over `threads`
/// workers. Every run owns its seed, so the report does not depend on the
/// thread count.
pub fn cross_arch_eval_threaded(
    data: &TrainGraph,
    ds: &Dataset,
    archs: &[Arch],
    cfg: &TrainConfig,
    repeats: usize,
    threads: usize,
) -> Result<EvalReport> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    cfg.validate()?;
    let jobs: Vec<(Arch, usize)> = archs
        .iter()
        .flat_map(|&a| (0..repeats).map(move |r| (a, r)))
        .collect();
    let threads = threads.clamp(1, jobs.len().max(1));
    let results: Vec<Result<RunResult>> = if threads == 1 {
        jobs.iter().map(|&(a, r)| single_run(data, ds, a, cfg, r)).collect()
    } else {
        let mut slots: Vec<Option<Result<RunResult>>> = (0..jobs.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let jobs = &jobs;
                    s.spawn(move || {
                        (w..jobs.len())
                            .step_by(threads)
                            .map(|k| (k, single_run(data, ds, jobs[k].0, cfg, jobs[k].1)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (k, r) in h.join().expect("evaluation worker panicked") {
                    slots[k] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.expect("every job ran")).collect()
    };
    let mut results = results.into_iter();
    let mut rows = Vec::with_capacity(archs.len());
    for &arch in archs {
        let runs = results.by_ref().take(repeats).collect::<Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&runs.iter().map(|r| r.test_accuracy).collect::<Vec<_>>());
        rows.push(ArchReport { arch, runs, mean, std });
    }
    Ok(EvalReport { rows })
}
