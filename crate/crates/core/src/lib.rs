//! Fiber nonlinearity compensation laboratory.
//!
//! A single-carrier coherent link is simulated with the split-step Fourier
//! method and equalized by conventional digital back-propagation (DBP),
//! learned DBP (LDBP) or perturbation-aided learned DBP (PA-LDBP), whose
//! nonlinear steps rotate each sample by a windowed correlation of the
//! neighbouring powers with first-order perturbation coefficients.
//!
//! Module map:
//! - [`signal`]: waveforms, FFT, 64-QAM, RRC shaping, resampling, seeded RNG
//! - [`channel`]: SSFM fiber, EDFA noise, transmitter and receiver front-end
//! - [`cdc`]: chromatic-dispersion compensation (exact, LS-designed FIR, OLA FDE)
//! - [`perturbation`]: perturbation coefficients, truncation and contours
//! - [`model`]: DBP baseline and the LDBP / PA-LDBP forward passes
//! - [`training`]: loss, gradients, Adam, training loop and pruning
//! - [`metrics`], [`complexity`]: BER/Q² and multiplication counts
//! - [`experiment`], [`dataset`]: configuration, dataset files, run orchestration

// `!(x > 0.0)` is used on purpose: it rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdc;
pub mod channel;
pub mod complexity;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod perturbation;
pub mod signal;
pub mod training;

pub use error::{Error, Result};

/// Version string embedded in every output file.
pub const VERSION: &str = concat!("nlc-", env!("CARGO_PKG_VERSION"));
pub use num_complex::Complex64;
pub use signal::ComplexSignal;
