use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use gcdm_core::io::{write_json, TOOL_VERSION};

/// Record of one invocation, written on success and on failure.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub argv: Vec<String>,
    pub config_file: Option<PathBuf>,
    pub deterministic: bool,
    pub threads: usize,
    /// Fully resolved settings; null when resolution itself failed.
    pub config: Value,
    pub seeds: BTreeMap<String, Value>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub results: BTreeMap<String, Value>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, config_file: Option<PathBuf>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            argv,
            config_file,
            deterministic: false,
            threads: 1,
            config: Value::Null,
            seeds: BTreeMap::new(),
            outputs: BTreeMap::new(),
            results: BTreeMap::new(),
            timings: BTreeMap::new(),
            status: "running".into(),
            exit_code: 0,
            error: None,
        }
    }

    pub fn set_config<T: Serialize>(&mut self, cfg: &T) {
        self.config = serde_json::to_value(cfg).unwrap_or(Value::Null);
    }

    pub fn result<T: Serialize>(&mut self, key: &str, v: T) {
        self.results.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn seed<T: Serialize>(&mut self, key: &str, v: T) {
        self.seeds.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    /// Time `f` and record it under `phase`.
    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.timings.entry(phase.to_string()).or_insert(0.0) += t.elapsed().as_secs_f64();
        out
    }

    pub fn write(&self, path: &Path) -> gcdm_core::Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| gcdm_core::Error::io(parent, e))?;
        }
        write_json(path, self)
    }
}

/// `<dir>/run_manifest.json` for directory outputs, `<file>.manifest.json`
/// next to file outputs, `./gcdm_run_manifest.json` without an output.
pub fn location(subcommand: &str, out: Option<&Path>) -> PathBuf {
    match out {
        None => PathBuf::from("gcdm_run_manifest.json"),
        Some(o) if subcommand == "eval" => {
            let stem = o.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "metrics".into());
            o.with_file_name(format!("{stem}.manifest.json"))
        }
        Some(o) => o.join("run_manifest.json"),
    }
}
