use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Graph condensation, coreset baselines and cross-architecture evaluation.
#[derive(Debug, Parser)]
#[command(name = "gcdm", version)]
pub struct Cli {
    /// Single-threaded execution everywhere.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Flat `key = value` file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Condense a dataset into a small synthetic graph.
    Condense(CondenseArgs),
    /// Train GNNs on a (condensed) graph and test on the original.
    Eval(EvalArgs),
    /// Select a coreset of real training nodes.
    Baseline(BaselineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Condense(_) => "condense",
            Command::Eval(_) => "eval",
            Command::Baseline(_) => "baseline",
        }
    }
}

// Required values are optional here so that a missing one can still produce
// a run manifest before exiting.

#[derive(Debug, Args)]
pub struct CondenseArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub ratio: Option<f64>,
    /// gcdm or gcdm-x
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// gcn or sgc
    #[arg(long)]
    pub embed_arch: Option<String>,
    /// Store kept edges with weight 1.
    #[arg(long)]
    pub binarize: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub condensed: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub original: Option<PathBuf>,
    /// Comma-separated list of gcn, sgc, mlp, sage, appnp.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// random, herding or kcenter
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Selection space for herding and kcenter: embeddings or features.
    #[arg(long)]
    pub space: Option<String>,
}
