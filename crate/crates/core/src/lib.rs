//! Learned energy-based posteriors for undersampled parallel MRI.
//!
//! The negative log posterior is `½‖Ax − b‖² + E_θ(x)` with `A` a coil-weighted,
//! column-undersampled Fourier operator and `E_θ` a small convolutional energy
//! network. The crate trains `θ` by contrastive maximum likelihood with
//! Langevin fake samples, computes MAP estimates by steepest descent with
//! backtracking, and estimates posterior means and variances by sampling.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod energy;
pub mod error;
pub mod forward;
pub mod map;
pub mod metrics;
pub mod numerics;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod tracking;
pub mod trainer;

pub use error::{Error, Result};
