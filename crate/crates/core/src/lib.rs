//! Carleman linearization of quadratic and cubic ODE systems.

pub mod error;
pub mod linalg;
pub mod tensor;
pub mod carleman;
pub mod spectral;
pub mod models;
pub mod theory;
pub mod experiment;

pub use error::{CarlemanError, Result};
