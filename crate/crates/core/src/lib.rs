//! Spike-based insect path integration.
//!
//! A virtual bee flies a random outbound walk, integrates its home vector in
//! eight short-term-memory cells and steers home through a small steering
//! layer. The network runs either as an analytic rate model or as an emulated
//! LIF network with quantized synapses, fixed-pattern mismatch and calibration.
//! An evolution strategy tunes the 26 steering weights.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent_world;
pub mod calibration;
pub mod error;
pub mod evolution;
pub mod genome;
pub mod harness;
pub mod rate_oracle;
pub mod seeds;
pub mod spiking_core;

pub use error::{Error, Result};
pub use genome::Genome;
