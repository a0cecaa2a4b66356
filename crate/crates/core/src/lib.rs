//! Simulation and verification toolkit for hyperbolic Gaussian analytic
//! functions on the unit polydisk.

pub mod cli;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod hole;
pub mod kernel;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod zeros1d;

pub use error::{Error, Result};
