//! Tail inverse regression for extreme sufficient dimension reduction.
//!
//! The crate estimates the subspace of covariates that drives the *extremes*
//! of a real target. The two estimators, TIREX1 and TIREX2, order the
//! whitened covariates by decreasing target value and accumulate first
//! (resp. second) moments over the `k` largest observations:
//!
//! ```text
//! S_j = z_(1) + ... + z_(j)                 M1 = k^-3 * sum_{j<=k} S_j S_j^T
//! T_j = sum_{i<=j} (z_(i) z_(i)^T - I)      M2 = k^-3 * sum_{j<=k} T_j T_j^T
//! ```
//!
//! The top-`d` eigenvectors of `M1` (or `M2`) span the estimated extreme
//! subspace. With `k = n` the two matrices reduce to the classical CUME and
//! CUVE inverse-regression matrices.
//!
//! Besides the estimators the crate ships the synthetic mixture models used
//! to benchmark them ([`synthetic`]), a Monte-Carlo sweep and tail-event
//! classification harness ([`evaluation`]), and a Monte-Carlo check of the
//! Gaussian limit of the underlying tail empirical processes
//! ([`process_verify`]).

pub mod data;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod linalg;
pub mod process_verify;
mod quadrature;
pub mod rng;
pub mod synthetic;

pub use data::{Dataset, RankView, StandardizedDataset, WhitenOptions};
pub use error::{Error, Result};
pub use estimators::{fit, Method, SdrFit};
pub use linalg::{EigFloor, EigenDecomposition, Projector, SymMatrix};
pub use synthetic::{MixtureSpec, ModelPreset};
