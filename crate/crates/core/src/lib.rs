//! Geographically-dependent individual-level models for spatial epidemics:
//! simulation, likelihood evaluation and Bayesian fitting.
//!
//! All numeric code is generic over [`Scalar`]; the aliases below fix the
//! scalar to `f64`, which is what the command line tool uses.

pub mod history;
pub mod lcar;
pub mod likelihood;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod population;
pub mod postprocess;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod synthetic;

pub use scalar::Scalar;

pub type Real = f64;
pub type Params = model::ModelParams<Real>;
pub type Pop = population::Population<Real>;
