//! Sample-complexity analysis of linear stochastic approximation with momentum.

pub mod complexity;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod output;
pub mod problem;
pub mod rng;
pub mod spectral;
pub mod theory;
pub mod verify;

pub use error::{Error, Result};
