//! Gradient-descent laboratory: four update rules, closed-form per-state
//! optimal hyperparameters, numeric oracles that check them, and a training
//! harness comparing optimal against fixed hyperparameters.

pub mod analyzer;
pub mod error;
pub mod harness;
pub mod hyperopt;
pub mod objective;
pub mod optimizer;
pub mod verify;

pub use error::{Error, Result};
pub use hyperopt::{FeasibleValue, HyperTarget};
pub use objective::{
    F3Gradient, GradientVector, Objective, ObjectiveId, ParamPoint, RegressionSample,
};
pub use optimizer::{HyperParams, Method, OptimizerState};
