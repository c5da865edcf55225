//! Channel prediction with Gaussian mixture models.
//!
//! A mixture of complex Gaussians is fitted offline to trajectories of
//! channel coefficients. Online, the same mixture is turned into a bank of
//! per-component LMMSE filters whose outputs are blended by the posterior
//! component probabilities of the noisy observation. The crate also ships
//! the classical baselines (sample-covariance LMMSE, Jakes LMMSE), a
//! sum-of-sinusoids fading generator, and an experiment harness.
//!
//! Vector layout: datasets keep coefficients in chronological order, while
//! every model, filter, and observation uses the reverse-chronological
//! layout `[h[N-1], ..., h[1], h[0]]`. Observations are the trailing `Mo`
//! entries of that vector.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chanmodel;
pub mod cli;
pub mod error;
pub mod eval;
pub mod gauss;
pub mod gmm;
pub mod predict;
pub mod special;

pub use num_complex::Complex64;

pub use crate::error::{Error, Result};
