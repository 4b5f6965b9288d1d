//! Verification and diagnostics for gridded weather forecasts: spectral
//! fidelity, deterministic skill, multi-model error consensus, error growth
//! and stability, physical balance, extremes, composite scoring, and seeded
//! synthetic oracles for all of them.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod composite;
pub mod consensus;
pub mod dynamics;
pub mod error;
pub mod extremes;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod skill;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
