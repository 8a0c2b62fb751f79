use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use gcdm_core::baselines::{gcn_embeddings, select_herding, select_kcenter, select_random, CoresetMethod};
use gcdm_core::condense::condense_with_progress;
use gcdm_core::dataset::Dataset;
use gcdm_core::graph::SplitMasks;
use gcdm_core::io::{load_dataset, save_condensed, save_dataset_parts, write_json};
use gcdm_core::train::{cross_arch_eval_threaded, TrainGraph};

use crate::manifest::RunManifest;
use crate::settings::{BaselineSettings, CondenseSettings, EvalSettings, Space};
use crate::Failure;

fn load(m: &mut RunManifest, dir: &Path) -> Result<Dataset, Failure> {
    let ds = m.timed("load", || load_dataset(dir))?;
    eprintln!(
        "loaded {}: {} nodes, {} features, {} classes",
        dir.display(),
        ds.num_nodes(),
        ds.num_features(),
        ds.num_classes()
    );
    Ok(ds)
}

pub fn condense(s: &CondenseSettings, m: &mut RunManifest) -> Result<(), Failure> {
    m.seed("condense", s.condense.seed);
    let ds = load(m, &s.dataset)?;
    m.result("num_synthetic", s.condense.num_synthetic(ds.num_nodes()));
    let stdout = std::io::stdout();
    let cg = m.timed("condense", || {
        condense_with_progress(&ds, &s.condense, &mut |p| {
            let mut out = stdout.lock();
            let _ = writeln!(out, "{p}");
            let _ = out.flush();
        })
    })?;
    m.timed("save", || save_condensed(&cg, &s.out))?;
    m.outputs.insert("condensed".into(), s.out.clone());
    m.result("final_loss", cg.final_loss);
    m.result("stored_entries", cg.graph.nnz());
    Ok(())
}

pub fn eval(s: &EvalSettings, m: &mut RunManifest, threads: usize) -> Result<(), Failure> {
    let seeds: Vec<u64> = (0..s.repeats as u64).map(|r| s.train.seed + r).collect();
    m.seed("runs", &seeds);
    let original = load(m, &s.original)?;
    let same = match (fs::canonicalize(&s.condensed), fs::canonicalize(&s.original)) {
        (Ok(a), Ok(b)) => a == b,
        _ => s.condensed == s.original,
    };
    let data = if same {
        eprintln!("whole-dataset mode: training on the original training split");
        TrainGraph::from_dataset(&original)
    } else {
        let cond = load(m, &s.condensed)?;
        if cond.num_features() != original.num_features() || cond.num_classes() != original.num_classes() {
            return Err(Failure::Config(format!(
                "{} has {} features and {} classes, {} has {} and {}",
                s.condensed.display(),
                cond.num_features(),
                cond.num_classes(),
                s.original.display(),
                original.num_features(),
                original.num_classes()
            )));
        }
        TrainGraph::from_dataset(&cond)
    };
    m.result("whole_dataset", same);
    let report = m.timed("train_eval", || {
        cross_arch_eval_threaded(&data, &original, &s.archs, &s.train, s.repeats, threads)
    })?;
    let mut lines = String::new();
    for row in &report.rows {
        for r in &row.runs {
            let _ = writeln!(lines, "{}\t{}\t{:.2}\t{}", row.arch, r.seed, r.test_accuracy, r.best_epoch);
        }
        eprintln!("{}: {:.2} ± {:.2}", row.arch, row.mean, row.std);
        m.result(&format!("{}_mean", row.arch), row.mean);
        m.result(&format!("{}_std", row.arch), row.std);
    }
    print!("{lines}");
    if let Some(parent) = s.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| gcdm_core::Error::io(parent, e))?;
    }
    m.timed("save", || write_json(&s.out, &report))?;
    m.outputs.insert("metrics".into(), s.out.clone());
    Ok(())
}

pub fn baseline(s: &BaselineSettings, m: &mut RunManifest) -> Result<(), Failure> {
    let ds = load(m, &s.dataset)?;
    let n_prime = (s.ratio * ds.num_nodes() as f64).round() as usize;
    m.result("num_selected", n_prime);
    let result = match s.method {
        CoresetMethod::Random => {
            m.seed("selection", s.seed);
            m.timed("select", || select_random(&ds, n_prime, s.seed))?
        }
        method => {
            let space = match s.space {
                Space::Embeddings => {
                    m.seed("reference_train", s.reference_train.seed);
                    m.timed("reference_train", || gcn_embeddings(&ds, &s.reference_train))?
                }
                Space::Features => ds.features().clone(),
            };
            m.timed("select", || match method {
                CoresetMethod::Herding => select_herding(&ds, n_prime, &space),
                _ => select_kcenter(&ds, n_prime, &space),
            })?
        }
    };
    let name = format!("coreset-{}", result.method);
    let splits = SplitMasks::all_train(result.indices.len());
    m.timed("save", || {
        save_dataset_parts(&s.out, &name, &result.graph, &result.features, &result.labels, &splits)
    })?;
    let mut idx = String::new();
    for i in &result.indices {
        let _ = writeln!(idx, "{i}");
    }
    let idx_path = s.out.join("indices.txt");
    fs::write(&idx_path, idx).map_err(|e| gcdm_core::Error::io(&idx_path, e))?;
    m.outputs.insert("coreset".into(), s.out.clone());
    m.outputs.insert("indices".into(), idx_path);
    Ok(())
}
