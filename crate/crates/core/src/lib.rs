//! Least-squares learning on dependent data.
//!
//! The crate simulates covariate processes (finite Markov chains, linear and
//! GLM dynamics), fits least-squares estimators on single trajectories, and
//! evaluates the quantities that control their excess risk: dependency
//! matrices, trajectory hypercontractivity, martingale offset complexity,
//! risk bounds and burn-in times. The `experiments` module runs seeded
//! replicate sweeps showing that the risk of the estimator reaches the iid
//! rate long before the process mixes.

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod hypotheses;
pub mod linalg;
pub mod processes;
pub mod seeds;

pub use error::{Error, Result};
