//! Estimation of conditional moment time-series models by minimizing the
//! martingale difference divergence (MDD) between model residuals and a
//! conditioning set, with analytic sandwich inference, a two-step estimator
//! for models with intercepts, the Dominguez-Lobato comparison estimator,
//! the simulation designs used to study them, and a Monte Carlo driver.

pub mod builtin;
pub mod data;
pub mod dgp;
pub mod dl;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod mdd;
pub mod model;
pub mod montecarlo;
pub mod optimize;
pub mod quadrature;
pub mod result;
pub mod rng;
pub mod sample;

pub use builtin::{builtin_model, ModelSpec, SpecOptions};
pub use error::{Error, Result};
pub use estimators::{closed_form_linear, estimate_dl, estimate_mdd, estimate_two_step};
pub use mdd::{mdd_objective, DistanceMatrix};
pub use model::{ClosureModel, InterceptMap, ResidualModel};
pub use optimize::{OptimizerConfig, OptimizerMethod};
pub use result::{EstimateResult, Method, ParamVector};
pub use sample::Sample;
