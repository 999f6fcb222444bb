//! Simulation and verification toolkit for mean-reverting square-root type
//! diffusions whose volatility exponent depends on the state,
//! `dv = κ(θ − v)dt + ξ v^{p(v)} dW`.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod exponent;
pub mod model;
pub mod solver;
pub mod stochastic;
pub mod truncation;

pub use error::{Error, Result};
pub use exponent::{make_builtin, ExponentFunction, ExponentSpec};
pub use model::{Model, ModelKind, ModelParams, ModelSpec};
pub use solver::{Path, PathBatch, PositivityPolicy};
pub use stochastic::{BrownianBatch, TimeGrid};
pub use truncation::TruncationParams;
