//! Differentially private range-query mechanisms and a benchmark harness
//! for comparing them.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: domains, histograms, workloads and budgets.
//! - [`primitives`]: Laplace and exponential mechanisms, budget ledgers,
//!   Haar/Fourier transforms, tree inference and matrix strategies.
//! - [`algorithms`]: the data-independent and data-dependent mechanisms.
//! - [`datagen`]: the data generator, synthetic shapes and CSV ingestion.
//! - [`harness`]: error measurement, trials, statistics, property checks
//!   and parameter tuning.

pub mod algorithms;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod model;
pub mod params;
pub mod primitives;
pub mod rng;

pub use error::{Error, Result};
