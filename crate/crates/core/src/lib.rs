//! Conservative flux-quantized spiking solver for diffusion equations.
//!
//! Each control volume of a structured grid is a conservative leaky
//! integrate-and-fire neuron whose membrane potential is the cell value.
//! Interfacial fluxes are quantized into signed integer spike counts of size
//! `quota`, and the state changes only by exchanging those packets, so total
//! mass is conserved by construction.
//!
//! Pipeline per stage: [`flux`] (state → continuous face fluxes) →
//! [`projector`] (fluxes ↔ spikes) → [`dfp`] (divergence and time update).
//! [`calibrate`] fits `quota` against a teacher trajectory, [`oracle`] supplies
//! reference solutions and [`metrics`] scores runs.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod cli;
pub mod dfp;
pub mod domain;
pub mod error;
pub mod flux;
pub mod metrics;
pub mod oracle;
pub mod projector;
pub mod sum;
pub mod trajectory;

pub use error::{Error, Result};
