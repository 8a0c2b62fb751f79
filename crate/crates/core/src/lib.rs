//! Graph condensation by distribution matching.
//!
//! The crate is organised bottom-up: dense/sparse kernels in [`linalg`],
//! graph containers in [`graph`], a small reverse-mode engine in
//! [`autodiff`], networks in [`models`], and the condensation, baseline and
//! evaluation procedures on top.

#[cfg(test)]
extern crate self as gcdm_core;

pub mod autodiff;
pub mod baselines;
pub mod condense;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod models;
pub mod train;

pub use error::{Error, Result};
