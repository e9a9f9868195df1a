//! Quantum-state texture and texture-based identification of unknown circuit layers.

pub mod channels;
pub mod circuit;
pub mod error;
pub mod identify;
pub mod io;
mod optimize;
pub mod paramagnet;
pub mod parallel;
pub mod rng;
pub mod states;
pub mod tensor;
pub mod texture;

pub use error::{Error, Result};
