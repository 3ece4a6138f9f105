//! Kernel sparse subspace clustering on the manifold of symmetric positive
//! definite matrices.
//!
//! The pipeline: embed SPD data points through a Log-Euclidean (or Stein)
//! kernel, solve the kernelized sparse self-expression problem with ADMM,
//! turn the coefficients into an affinity matrix and segment it with
//! normalized spectral clustering. Region covariance descriptors, synthetic
//! data generation and clustering metrics round out the toolkit.

pub mod clustering;
pub mod descriptors;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod solver;
pub mod spd;
pub mod synth;

pub use error::{Error, Result};
