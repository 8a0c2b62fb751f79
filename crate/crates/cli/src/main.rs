//! `gcdm` command-line driver.
//!
//! stdout carries only machine-readable lines: tab-separated progress records
//! and, last, the path of the JSON file the run produced. Everything else
//! goes to stderr. Exit codes: 0 success, 2 usage/config/IO error, 3 numeric
//! failure.

mod args;
mod commands;
mod manifest;
mod settings;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use manifest::{location, RunManifest};
use settings::FileValues;

#[derive(Debug)]
pub enum Failure {
    /// Missing required argument; usage text is printed.
    Usage(String),
    Config(String),
    Numeric(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Config(m) => f.write_str(m),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<gcdm_core::Error> for Failure {
    fn from(e: gcdm_core::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn thread_count(deterministic: bool) -> Result<usize, Failure> {
    if deterministic {
        return Ok(1);
    }
    match std::env::var("GCDM_NUM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::Config(format!("GCDM_NUM_THREADS='{v}' is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Output path named by the flags or the config file, used to place the
/// manifest even when resolution fails.
fn declared_out(cmd: &Command, file: Option<&FileValues>) -> Option<PathBuf> {
    let flag = match cmd {
        Command::Condense(a) => a.out.clone(),
        Command::Eval(a) => a.out.clone(),
        Command::Baseline(a) => a.out.clone(),
    };
    flag.or_else(|| file.and_then(|f| f.peek_path("out")))
}

fn execute(cli: &Cli, m: &mut RunManifest, file: FileValues) -> Result<Option<PathBuf>, Failure> {
    m.deterministic = cli.deterministic;
    m.threads = thread_count(cli.deterministic)?;
    match &cli.command {
        Command::Condense(a) => {
            let s = settings::condense(a, file)?;
            m.set_config(&s);
            commands::condense(&s, m)?;
            Ok(None)
        }
        Command::Eval(a) => {
            let s = settings::eval(a, file)?;
            m.set_config(&s);
            commands::eval(&s, m, m.threads)?;
            Ok(Some(s.out))
        }
        Command::Baseline(a) => {
            let s = settings::baseline(a, file)?;
            m.set_config(&s);
            commands::baseline(&s, m)?;
            Ok(None)
        }
    }
}

fn finish(m: &mut RunManifest, path: &PathBuf, failure: Option<&Failure>) -> u8 {
    let code = failure.map_or(0, Failure::exit_code);
    m.exit_code = code as i32;
    m.status = if failure.is_some() { "error" } else { "ok" }.into();
    m.error = failure.map(|f| f.to_string());
    if let Err(e) = m.write(path) {
        eprintln!("error: could not write run manifest: {e}");
        return code.max(2);
    }
    code
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let mut m = RunManifest::new("unknown", argv, None);
            let path = location("unknown", None);
            let f = Failure::Config(e.kind().to_string());
            return ExitCode::from(finish(&mut m, &path, Some(&f)).max(2));
        }
    };
    let sub = cli.command.name();
    let mut m = RunManifest::new(sub, argv, cli.config.clone());
    let file = FileValues::load(cli.config.as_deref(), sub);
    let path = location(sub, declared_out(&cli.command, file.as_ref().ok()).as_deref());
    let outcome = file.and_then(|f| execute(&cli, &mut m, f));
    match outcome {
        Ok(json) => {
            let code = finish(&mut m, &path, None);
            if code == 0 {
                println!("{}", json.unwrap_or(path).display());
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {f}");
            if let Failure::Usage(_) = f {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sc) = cmd.find_subcommand_mut(sub) {
                    eprintln!("{}", sc.render_help());
                }
            }
            let code = finish(&mut m, &path, Some(&f));
            eprintln!("run manifest: {}", path.display());
            ExitCode::from(code)
        }
    }
}
