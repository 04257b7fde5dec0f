//! Event-level surrogate modeling of analog circuit blocks.
//!
//! The crate is organized as a pipeline:
//!
//! - [`oracle`]: analytical transient simulator for a crossbar row and a LIF
//!   neuron; the ground truth every other stage is checked against.
//! - [`dataset`]: randomized testbenches, PWL files, characterization runs,
//!   E1/E2/E3 event decomposition and run-wise splits.
//! - [`models`]: five per-event predictors over five model families, grid
//!   search, selection and a portable bundle format.
//! - [`engine`]: the batched event-driven inference wrapper with idle-period
//!   merging.
//! - [`netsim`]: ANN/SNN workloads composed of many surrogate instances and
//!   the error-propagation and runtime-scaling studies.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and a plain sequential loop otherwise.

pub mod dataset;
pub mod engine;
mod error;
pub mod models;
pub mod netsim;
pub mod oracle;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
