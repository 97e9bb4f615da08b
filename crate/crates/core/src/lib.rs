//! Ratios of normalizing constants by Bridge sampling, with a Real-NVP
//! transport trained through an f-GAN objective to shrink the estimator's
//! relative mean square error.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, threads or the command line lives in the `fgb` companion
//! crate.
//!
//! Module map:
//!
//! - [`densities`]: unnormalized target densities with exact samplers and,
//!   where known, closed-form log normalizing constants.
//! - [`divergences`]: generator functions, the scalar variational objective,
//!   the weighted harmonic divergence estimator and the plug-in RE² estimate.
//! - [`bridge`]: optimal, geometric, importance-sampling and general-f
//!   Bridge estimators, plus train/estimate sample splitting.
//! - [`flow`]: Real-NVP coupling flow with exact inverse and log-Jacobians.
//! - [`grad`]: gradient records, the adaptive-moment optimizer and a
//!   finite-difference verifier.
//! - [`fgb`]: the hybrid training objective, the alternating minimax loop
//!   and the end-to-end estimator.

#![no_std]

extern crate alloc;

pub mod bridge;
pub mod densities;
pub mod divergences;
mod error;
pub mod fgb;
pub mod flow;
pub mod grad;
pub mod math;
pub mod optimize;
pub mod quadrature;
mod ratios;
mod sample;

pub use error::{Error, Result};
pub use ratios::LogRatios;
pub use sample::SampleBatch;
