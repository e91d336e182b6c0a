//! Time-to-Pattern: learn a small bank of patterns that maximally compress a
//! univariate time series.
//!
//! The crate trains a variational autoencoder whose latent code follows a
//! relaxed-Bernoulli (BinConcrete) prior. The decoder is a bank of `k`
//! learnable kernels of length `m`; reconstruction is the latent-weighted sum
//! of those kernels, so the kernels themselves are the discovered patterns.
//! Summaries, description-length metrics, synthetic benchmarks and
//! similarity-based baselines round out the toolkit; the `t2p` binary drives
//! everything from the command line.

pub mod baseline;
pub mod binconcrete;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod svg;
pub mod tensor;

pub use error::{Error, Result};
