//! Resolution of run settings: flags over the config file over defaults.
//!
//! The config file is flat `key = value` text. Keys are the long flag names
//! (`-` and `_` are interchangeable) plus hyperparameters that have no flag.
//! A key may be prefixed with a subcommand (`condense.eta1 = 5`); prefixed
//! keys for other subcommands are ignored. An unprefixed key that no
//! subcommand knows is an error; one that only another subcommand knows is
//! ignored, so a single file can serve a whole pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use gcdm_core::baselines::CoresetMethod;
use gcdm_core::condense::{CondenseConfig, Variant};
use gcdm_core::io::read_flat_config;
use gcdm_core::models::Arch;
use gcdm_core::train::TrainConfig;

use crate::args::{BaselineArgs, CondenseArgs, EvalArgs};
use crate::Failure;

const SUBCOMMANDS: [&str; 3] = ["condense", "eval", "baseline"];

const KNOWN_KEYS: [&str; 34] = [
    "dataset", "out", "ratio", "variant", "epochs", "seed", "layers", "embed_arch", "binarize", "k1", "k2",
    "tau1", "tau2", "eta1", "eta2", "eta3", "x_rule", "gen_rule", "hidden", "generator_hidden",
    "reinit_adversary", "condensed", "original", "arch", "repeats", "method", "space", "train_epochs", "lr",
    "weight_decay", "dropout", "patience", "train_layers", "train_hidden",
];

/// Config-file entries that apply to one subcommand.
pub struct FileValues {
    path: Option<PathBuf>,
    map: BTreeMap<String, String>,
}

impl FileValues {
    pub fn load(path: Option<&Path>, subcommand: &str) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self { path: None, map: BTreeMap::new() });
        };
        let raw = read_flat_config(path)?;
        let mut map = BTreeMap::new();
        for (key, value) in raw {
            let key = key.replace('-', "_");
            let key = match key.split_once('.') {
                Some((sub, rest)) if SUBCOMMANDS.contains(&sub) => {
                    if sub != subcommand {
                        continue;
                    }
                    rest.to_string()
                }
                Some(_) => return Err(Failure::Config(format!("{}: unknown section in key '{key}'", path.display()))),
                None => key,
            };
            if map.insert(key.clone(), value).is_some() {
                return Err(Failure::Config(format!("{}: '{key}' given twice", path.display())));
            }
        }
        Ok(Self { path: Some(path.to_path_buf()), map })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| {
                let file = self.path.as_deref().unwrap_or(Path::new("config")).display();
                Failure::Config(format!("{file}: bad value '{v}' for {key}: {e}"))
            }),
        }
    }

    fn finish(self) -> Result<(), Failure> {
        match self.map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            None => Ok(()),
            Some(k) => {
                let file = self.path.as_deref().unwrap_or(Path::new("config")).display();
                Err(Failure::Config(format!("{file}: unknown key '{k}'")))
            }
        }
    }

    /// Peek at a path-valued key without consuming it.
    pub fn peek_path(&self, key: &str) -> Option<PathBuf> {
        self.map.get(key).map(PathBuf::from)
    }
}

fn parse_flag<T: FromStr>(name: &str, v: Option<&String>) -> Result<Option<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    v.map(|s| s.parse().map_err(|e| Failure::Config(format!("--{name} '{s}': {e}"))))
        .transpose()
}

fn required<T>(name: &str, v: Option<T>) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("missing required --{name}")))
}

/// Training hyperparameters shared by `eval` and the herding/k-center
/// reference model. Only the file can set them.
fn train_config(file: &mut FileValues, seed: u64) -> Result<TrainConfig, Failure> {
    let mut t = TrainConfig { seed, ..TrainConfig::default() };
    macro_rules! set {
        ($($field:ident => $key:literal),*) => {
            $(if let Some(v) = file.take($key)? { t.$field = v; })*
        };
    }
    set!(epochs => "train_epochs", lr => "lr", weight_decay => "weight_decay", dropout => "dropout",
         patience => "patience", layers => "train_layers", hidden => "train_hidden");
    t.validate()?;
    Ok(t)
}

#[derive(Clone, Debug, Serialize)]
pub struct CondenseSettings {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub condense: CondenseConfig,
}

pub fn condense(args: &CondenseArgs, mut file: FileValues) -> Result<CondenseSettings, Failure> {
    let dataset = required("dataset", args.dataset.clone().or(file.take("dataset")?))?;
    let out = required("out", args.out.clone().or(file.take("out")?))?;
    let variant: Variant = parse_flag("variant", args.variant.as_ref())?
        .or(file.take("variant")?)
        .unwrap_or(Variant::Gcdm);
    let mut c = CondenseConfig::new(variant);
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = file.take(stringify!($field))? { c.$field = v; })*
        };
    }
    set!(ratio, epochs, seed, layers, k1, k2, tau1, tau2, eta1, eta2, eta3, x_rule, gen_rule, hidden,
         generator_hidden, reinit_adversary, binarize);
    if let Some(a) = file.take::<Arch>("embed_arch")? {
        c.embed_arch = a;
    }
    if let Some(v) = args.ratio {
        c.ratio = v;
    }
    if let Some(v) = args.epochs {
        c.epochs = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.layers {
        c.layers = v;
    }
    if let Some(a) = parse_flag("embed-arch", args.embed_arch.as_ref())? {
        c.embed_arch = a;
    }
    if args.binarize {
        c.binarize = true;
    }
    file.finish()?;
    c.validate()?;
    Ok(CondenseSettings { dataset, out, condense: c })
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalSettings {
    pub condensed: PathBuf,
    pub original: PathBuf,
    pub archs: Vec<Arch>,
    pub repeats: usize,
    pub out: PathBuf,
    pub train: TrainConfig,
}

fn parse_archs(s: &str) -> Result<Vec<Arch>, Failure> {
    let archs = s
        .split(',')
        .filter(|a| !a.trim().is_empty())
        .map(|a| a.parse::<Arch>().map_err(Failure::from))
        .collect::<Result<Vec<_>, _>>()?;
    if archs.is_empty() {
        return Err(Failure::Config("--arch lists no architecture".into()));
    }
    Ok(archs)
}

pub fn eval(args: &EvalArgs, mut file: FileValues) -> Result<EvalSettings, Failure> {
    let condensed = required("condensed", args.condensed.clone().or(file.take("condensed")?))?;
    let original = required("original", args.original.clone().or(file.take("original")?))?;
    let out = required("out", args.out.clone().or(file.take("out")?))?;
    let arch: String = args.arch.clone().or(file.take("arch")?).unwrap_or_else(|| "gcn".into());
    let repeats = args.repeats.or(file.take("repeats")?).unwrap_or(5);
    let seed = args.seed.or(file.take("seed")?).unwrap_or(0);
    if repeats == 0 {
        return Err(Failure::Config("--repeats must be at least 1".into()));
    }
    let train = train_config(&mut file, seed)?;
    file.finish()?;
    Ok(EvalSettings { condensed, original, archs: parse_archs(&arch)?, repeats, out, train })
}

/// Where herding and k-center measure distances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Embeddings,
    Features,
}

impl FromStr for Space {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "embeddings" => Ok(Space::Embeddings),
            "features" => Ok(Space::Features),
            other => Err(format!("unknown space '{other}' (embeddings or features)")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineSettings {
    pub method: CoresetMethod,
    pub dataset: PathBuf,
    pub ratio: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub space: Space,
    /// Model whose outputs form the embedding space.
    pub reference_train: TrainConfig,
}

pub fn baseline(args: &BaselineArgs, mut file: FileValues) -> Result<BaselineSettings, Failure> {
    let method: CoresetMethod = required(
        "method",
        parse_flag("method", args.method.as_ref())?.or(file.take("method")?),
    )?;
    let dataset = required("dataset", args.dataset.clone().or(file.take("dataset")?))?;
    let out = required("out", args.out.clone().or(file.take("out")?))?;
    let ratio = args.ratio.or(file.take("ratio")?).unwrap_or(0.026);
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Failure::Config(format!("ratio {ratio} not in (0, 1)")));
    }
    let seed = args.seed.or(file.take("seed")?).unwrap_or(0);
    let space = parse_flag("space", args.space.as_ref())?
        .or(file.take("space")?)
        .unwrap_or(Space::Embeddings);
    let reference_train = train_config(&mut file, seed)?;
    file.finish()?;
    Ok(BaselineSettings { method, dataset, ratio, out, seed, space, reference_train })
}
