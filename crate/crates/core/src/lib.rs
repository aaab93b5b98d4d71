//! Numerical workbench for one-dimensional path-integral quantum mechanics.

pub mod error;
pub mod gaussian;
pub mod instanton;
pub mod model;
pub mod perturbation;
pub mod pimc;
pub mod quad;
pub mod spectral;
pub mod stats;
pub mod topology;
pub mod wick;

pub use error::{Error, Result};
