//! Dynamic perturbation masks for explaining predictions of time-series
//! models.
//!
//! A mask `M` has the shape of the input `X` (time steps by features) and
//! entries in `[0, 1]`. A perturbation operator blends each input entry with
//! a substitute computed from the same feature at neighbouring times, to a
//! degree set by the matching mask entry. Fitting a mask finds the smallest
//! set of entries that must be kept unperturbed for the model's prediction
//! to stay put.
//!
//! Crate layout:
//! - [`numerics`]: matrices, seeded random streams, sorting.
//! - [`datagen`]: synthetic ARMA and hidden-Markov datasets with known
//!   salient sets.
//! - [`models`]: the model contract, a white-box regressor and a GRU
//!   classifier with its trainer.
//! - [`perturbations`]: the perturbation operators.
//! - [`masks`]: losses and the fitting loop.
//! - [`metrics`]: information, entropy, precision/recall areas and
//!   prediction-shift metrics.
//! - [`baselines`]: occlusion, permutation, integrated gradients and Shapley
//!   sampling.
//! - [`experiments`]: the end-to-end experiment harness behind the CLI.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod masks;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod perturbations;

pub use error::{Error, Result};
pub use masks::Mask;
pub use numerics::{RngStream, TimeMatrix};
