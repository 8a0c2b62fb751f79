use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the condensation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} has zero degree and cannot be normalized")]
    ZeroDegree { node: usize },

    #[error("adjacency is not symmetric at ({row}, {col})")]
    AsymmetricInput { row: usize, col: usize },

    #[error("index mask is empty")]
    EmptyMask,

    #[error("graph with {nodes} nodes exceeds the dense cap of {cap}")]
    TooLargeToDensify { nodes: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },

    #[error("variable does not belong to the active tape (tape cleared or foreign)")]
    TapeCleared,

    #[error("parameter has no gradient; run backward first")]
    GradNotComputed,

    #[error("{available} synthetic nodes cannot cover {needed} nonempty classes")]
    TooFewSyntheticNodes { needed: usize, available: usize },

    #[error("class {class} has no training nodes to sample features from")]
    EmptySourceClass { class: usize },

    #[error("class {class} is empty on one side of the matching loss")]
    EmptyClassInMmd { class: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checksum mismatch for {}", path.display())]
    ChecksumMismatch { path: PathBuf },

    #[error("{}:{line}: {msg}", path.display())]
    MalformedFile {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("count mismatch for {what}: expected {expected}, found {found}")]
    CountMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach location context to a numeric failure.
    pub fn with_context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Numeric(msg) => Error::Numeric(format!("{ctx}: {msg}")),
            other => other,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
