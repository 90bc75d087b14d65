use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::Reparam;

/// Parameter vector with an optional intercept/slope split at `d1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub d1: Option<usize>,
}

impl ParamVector {
    pub fn theta1(&self) -> &[f64] {
        &self.values[..self.d1.unwrap_or(0)]
    }

    pub fn theta2(&self) -> &[f64] {
        &self.values[self.d1.unwrap_or(0)..]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mdd,
    MddClosedForm,
    MddTwoStep,
    Dl,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Mdd => "mdd",
            Method::MddClosedForm => "mdd-closed-form",
            Method::MddTwoStep => "mdd-two-step",
            Method::Dl => "dl",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub theta_hat: ParamVector,
    pub param_names: Vec<String>,
    /// Finite-sample covariance of `theta_hat`; NaN when it could not be
    /// formed at a non-converged point.
    pub vcov: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub method: Method,
}

impl EstimateResult {
    pub fn theta(&self) -> &[f64] {
        &self.theta_hat.values
    }

    pub fn t_stats(&self) -> Vec<f64> {
        self.theta()
            .iter()
            .zip(&self.std_errors)
            .map(|(t, s)| t / s)
            .collect()
    }

    /// Estimates and covariance in a user-facing parameterization.
    pub fn reparameterized(&self, r: &Reparam) -> EstimateResult {
        let theta = &r.matrix * nalgebra::DVector::from_column_slice(self.theta());
        let mut vcov = &r.matrix * &self.vcov * r.matrix.transpose();
        crate::linalg::symmetrize(&mut vcov);
        let std_errors = (0..vcov.nrows()).map(|i| vcov[(i, i)].max(0.0).sqrt()).collect();
        EstimateResult {
            theta_hat: ParamVector {
                values: theta.iter().copied().collect(),
                d1: None,
            },
            param_names: r.names.clone(),
            vcov,
            std_errors,
            ..self.clone()
        }
    }
}
