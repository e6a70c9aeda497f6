//! Numerical laboratory for one-dimensional diffusions: hitting-time
//! moments, spectral decompositions of killed and reflected generators,
//! Nash-type inequalities and polynomial semigroup decay, cross-checked
//! against Monte Carlo simulation.

pub mod cli;
pub mod config;
pub mod discretize;
pub mod error;
pub mod expr;
pub mod model;
pub mod moments;
pub mod montecarlo;
pub mod numeric;
pub mod report;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
