//! Dataset directory format, condensed-graph persistence and small text
//! formats.
//!
//! A dataset directory holds:
//!
//! ```text
//! meta.json          counts, directedness and sha256 of every file below
//! edges.tsv          "src\tdst[\tweight]" per line, 0-based
//! features.bin       little-endian f32, row-major, num_nodes x num_features
//! labels.txt         one integer label per line
//! split_train.txt    one node index per line (likewise split_val, split_test)
//! ```
//!
//! Condensed graphs add `condense_meta.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::condense::{CondenseConfig, CondensedGraph};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, LabelVector, SparseGraph, SplitMasks};
use crate::linalg::Matrix;
use crate::models::{GnnParams, GnnSpec};
use crate::train::predict;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub edges: FileEntry,
    pub features: FileEntry,
    pub labels: FileEntry,
    pub split_train: FileEntry,
    pub split_val: FileEntry,
    pub split_test: FileEntry,
}

/// Contents of `meta.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    /// Edge lines are one direction each; the loader symmetrizes either way.
    #[serde(default)]
    pub directed: bool,
    pub files: ManifestFiles,
}

/// Contents of `condense_meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondenseMeta {
    pub config: CondenseConfig,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub tool_version: String,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn as_text<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        malformed(path, line, "invalid UTF-8")
    })
}

/// Read `meta.json` and one checksummed file.
fn checked(dir: &Path, entry: &FileEntry) -> Result<(PathBuf, Vec<u8>)> {
    let path = dir.join(&entry.path);
    let bytes = read(&path)?;
    if sha256_hex(&bytes) != entry.sha256.to_ascii_lowercase() {
        return Err(Error::ChecksumMismatch { path });
    }
    Ok((path, bytes))
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("meta.json");
    let bytes = read(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| malformed(&path, e.line(), e.to_string()))
}

type Edge = (usize, usize, f32);

fn parse_edges(path: &Path, text: &str, num_nodes: usize) -> Result<(Vec<Edge>, bool)> {
    let mut edges = Vec::new();
    let mut weighted: Option<bool> = None;
    for (k, line) in text.lines().enumerate() {
        let ln = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let has_weight = match fields.len() {
            2 => false,
            3 => true,
            n => return Err(malformed(path, ln, format!("expected 2 or 3 tab-separated fields, got {n}"))),
        };
        match weighted {
            None => weighted = Some(has_weight),
            Some(w) if w != has_weight => return Err(malformed(path, ln, "mixed weighted and unweighted lines")),
            _ => {}
        }
        let node = |s: &str| -> Result<usize> {
            let v: usize = s
                .trim()
                .parse()
                .map_err(|_| malformed(path, ln, format!("bad node index '{s}'")))?;
            if v >= num_nodes {
                return Err(malformed(path, ln, format!("node {v} out of range for {num_nodes} nodes")));
            }
            Ok(v)
        };
        let (s, d) = (node(fields[0])?, node(fields[1])?);
        let w = if has_weight {
            let w: f32 = fields[2]
                .trim()
                .parse()
                .map_err(|_| malformed(path, ln, format!("bad weight '{}'", fields[2])))?;
            if !w.is_finite() {
                return Err(malformed(path, ln, "non-finite weight"));
            }
            w
        } else {
            1.0
        };
        edges.push((s, d, w));
    }
    Ok((edges, weighted.unwrap_or(false)))
}

fn parse_indices(path: &Path, text: &str, bound: usize, what: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: usize = t
            .parse()
            .map_err(|_| malformed(path, k + 1, format!("bad {what} '{t}'")))?;
        if v >= bound {
            return Err(malformed(path, k + 1, format!("{what} {v} out of range (< {bound})")));
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_features(path: &Path, bytes: &[u8], rows: usize, cols: usize) -> Result<FeatureMatrix> {
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::CountMismatch {
            what: format!("bytes in {}", path.display()),
            expected,
            found: bytes.len(),
        });
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{}: feature ({}, {}) is not finite",
            path.display(),
            k / cols.max(1),
            k % cols.max(1)
        )));
    }
    Matrix::from_vec(rows, cols, data)
}

/// Raw edge lines of a dataset directory, before canonicalization.
pub fn read_edge_lines(dir: &Path) -> Result<Vec<Edge>> {
    let m = read_manifest(dir)?;
    let (path, bytes) = checked(dir, &m.files.edges)?;
    Ok(parse_edges(&path, as_text(&path, &bytes)?, m.num_nodes)?.0)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let m = read_manifest(dir)?;
    let n = m.num_nodes;
    let (path, bytes) = checked(dir, &m.files.edges)?;
    let (edges, weighted) = parse_edges(&path, as_text(&path, &bytes)?, n)?;
    let graph = SparseGraph::from_edges(n, &edges, weighted)?;

    let (path, bytes) = checked(dir, &m.files.features)?;
    let features = parse_features(&path, &bytes, n, m.num_features)?;

    let (path, bytes) = checked(dir, &m.files.labels)?;
    let labels = parse_indices(&path, as_text(&path, &bytes)?, m.num_classes, "label")?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            what: format!("lines in {}", path.display()),
            expected: n,
            found: labels.len(),
        });
    }
    let labels = LabelVector::new(labels, m.num_classes)?;

    let split = |e: &FileEntry| -> Result<Vec<usize>> {
        let (path, bytes) = checked(dir, e)?;
        parse_indices(&path, as_text(&path, &bytes)?, n, "node index")
    };
    let splits = SplitMasks::new(
        split(&m.files.split_train)?,
        split(&m.files.split_val)?,
        split(&m.files.split_test)?,
        n,
    )?;
    Dataset::new(m.name, graph, features, labels, splits)
}

fn format_edges(graph: &SparseGraph) -> String {
    let mut s = String::new();
    for (a, b, w) in graph.undirected_edges() {
        if graph.is_weighted() {
            // `{}` on f32 prints the shortest string that parses back exactly.
            let _ = writeln!(s, "{a}\t{b}\t{w}");
        } else {
            let _ = writeln!(s, "{a}\t{b}");
        }
    }
    s
}

fn format_indices(xs: &[usize]) -> String {
    let mut s = String::with_capacity(xs.len() * 5);
    for x in xs {
        let _ = writeln!(s, "{x}");
    }
    s
}

/// Write a graph in the dataset directory format. Edges are written once
/// per undirected pair.
pub fn save_dataset_parts(
    dir: &Path,
    name: &str,
    graph: &SparseGraph,
    features: &FeatureMatrix,
    labels: &LabelVector,
    splits: &SplitMasks,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if features.rows() != graph.num_nodes() || labels.len() != graph.num_nodes() {
        return Err(Error::CountMismatch {
            what: "rows to save".into(),
            expected: graph.num_nodes(),
            found: features.rows().min(labels.len()),
        });
    }
    let mut feat = Vec::with_capacity(features.data().len() * 4);
    for v in features.data() {
        feat.extend_from_slice(&v.to_le_bytes());
    }
    let files: [(&str, Vec<u8>); 6] = [
        ("edges.tsv", format_edges(graph).into_bytes()),
        ("features.bin", feat),
        ("labels.txt", format_indices(labels.as_slice()).into_bytes()),
        ("split_train.txt", format_indices(&splits.train).into_bytes()),
        ("split_val.txt", format_indices(&splits.val).into_bytes()),
        ("split_test.txt", format_indices(&splits.test).into_bytes()),
    ];
    let mut entries = Vec::with_capacity(6);
    for (fname, bytes) in &files {
        write(&dir.join(fname), bytes)?;
        entries.push(FileEntry {
            path: fname.to_string(),
            sha256: sha256_hex(bytes),
        });
    }
    let mut it = entries.into_iter();
    let mut next = || it.next().expect("six entries");
    let manifest = DatasetManifest {
        name: name.to_string(),
        num_nodes: graph.num_nodes(),
        num_features: features.cols(),
        num_classes: labels.num_classes(),
        directed: false,
        files: ManifestFiles {
            edges: next(),
            features: next(),
            labels: next(),
            split_train: next(),
            split_val: next(),
            split_test: next(),
        },
    };
    write_json(&dir.join("meta.json"), &manifest)?;
    Ok(manifest)
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    save_dataset_parts(dir, &ds.name, ds.graph(), ds.features(), ds.labels(), ds.splits())
}

/// Every condensed node is a training node; val and test are empty.
pub fn save_condensed(cg: &CondensedGraph, dir: &Path) -> Result<()> {
    let splits = SplitMasks::all_train(cg.num_nodes());
    let name = format!("condensed-{}", cg.config.variant);
    save_dataset_parts(dir, &name, &cg.graph, &cg.features, &cg.labels, &splits)?;
    let meta = CondenseMeta {
        config: cg.config.clone(),
        final_loss: cg.final_loss,
        epoch_losses: cg.epoch_losses.clone(),
        tool_version: TOOL_VERSION.to_string(),
    };
    write_json(&dir.join("condense_meta.json"), &meta)
}

pub fn load_condensed(dir: &Path) -> Result<CondensedGraph> {
    let ds = load_dataset(dir)?;
    let path = dir.join("condense_meta.json");
    let bytes = read(&path)?;
    let meta: CondenseMeta = serde_json::from_slice(&bytes).map_err(|e| malformed(&path, e.line(), e.to_string()))?;
    Ok(CondensedGraph {
        graph: ds.graph().clone(),
        features: ds.features().clone(),
        labels: ds.labels().clone(),
        config: meta.config,
        final_loss: meta.final_loss,
        epoch_losses: meta.epoch_losses,
    })
}

/// CSV of the model outputs on `ds`: `node_id,label,e_0,...`, values with 9
/// significant digits.
pub fn export_embeddings(params: &GnnParams, spec: &GnnSpec, ds: &Dataset, path: &Path) -> Result<()> {
    let emb = predict(params, spec, ds)?;
    let mut s = String::from("node_id,label");
    for k in 0..emb.cols() {
        let _ = write!(s, ",e_{k}");
    }
    s.push('\n');
    for i in 0..emb.rows() {
        let _ = write!(s, "{i},{}", ds.labels().get(i));
        for v in emb.row(i) {
            let _ = write!(s, ",{v:.8e}");
        }
        s.push('\n');
    }
    write(path, s.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    s.push('\n');
    write(path, s.as_bytes())
}

/// Parse a flat `key = value` file. `#` starts a comment; blank lines are
/// ignored; a repeated key is an error.
pub fn parse_flat_config(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(path, k + 1, "expected key = value"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(malformed(path, k + 1, "empty key"));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(malformed(path, k + 1, format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

pub fn read_flat_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let bytes = read(path)?;
    parse_flat_config(path, as_text(path, &bytes)?)
}
