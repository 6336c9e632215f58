//! Simulation and analysis toolkit for a clamped extensible beam
//!
//! ```text
//! u_tt + Δ²u − κΔu + α(‖Δu‖² + ‖u_t‖²)^q u_t = 0   on (0, L), u = u_x = 0 at the ends
//! ```
//!
//! (or the strong variant with `−α(…)^q Δu_t`), discretized by finite
//! differences. The crate provides the discrete operators and norms, energy
//! and dissipation, time integrators, the explicit polynomial decay envelopes,
//! and tools to fit and verify decay rates.

// `!(x > 0.0)` is used deliberately so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod banded;
pub mod cli;
pub mod dynamics;
pub mod envelope;
pub mod error;
pub mod integrate;
pub mod model;
pub mod operators;

pub use error::{Error, Result};
pub use model::{EnergyBreakdown, EnergyTrace, InitialKind, ModelParams, Sample, Scheme, State, Variant};
