//! Optimal exercise of a perpetual American call whose discount rate
//! switches from `r` to `r + q` while the log-price sits below a level `y`.
//!
//! The underlying is a spectrally negative Lévy process with
//! hyper-exponential jumps, so every scale function is an exponential sum
//! and the free-boundary problem reduces to one-dimensional root finding
//! and quadrature. A seeded Monte Carlo simulator provides an independent
//! check of each analytic formula.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these guards

pub mod config;
pub mod context;
pub mod error;
pub mod export;
pub mod levy;
pub mod mc;
pub mod numerics;
pub mod scale;
pub mod thresholds;
pub mod valuation;

pub use context::Context;
pub use error::{Error, Result};
pub use levy::{HyperExpJumps, LevyModel, Phase};
