//! Resonator-detection tomography of two-beam, four-sideband Gaussian states.

pub mod config;
pub mod error;
pub mod forward;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod resonator;
pub mod state;
pub mod tomography;
pub mod witness;

pub use error::{Error, Result};
