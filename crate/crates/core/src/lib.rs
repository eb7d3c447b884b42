//! Anti-aliased activation functions and upsampling layers, their aliasing-prone
//! baselines, and an aliasing-to-harmonic ratio benchmark over band-limited
//! test signals.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod bench;
pub mod config;
pub mod error;
pub mod filters;
mod io;
pub mod metrics;
pub mod signal;
pub mod upsamplers;
pub mod wav;

#[cfg(test)]
mod suite;

pub use error::{Error, Result};
pub use io::write_atomic;
pub use signal::AudioBuffer;
