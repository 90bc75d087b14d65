//! Point estimators: one-step MDD, its closed form for linear models, the
//! two-step intercept estimator, and the DL comparison estimator.

use nalgebra::{DMatrix, DVector};

use crate::dl::{dl_objective, dl_value_and_gradient, DlObjectiveState};
use crate::error::{Error, Result};
use crate::inference::{vcov_dl_with, vcov_theorem2, vcov_theorem3, Covariance};
use crate::linalg::{guarded_inverse, CONDITION_LIMIT};
use crate::mdd::{centered, distance_weighted, mdd_objective, mdd_value_and_gradient, DistanceMatrix};
use crate::model::{check_compatible, InterceptFree, ResidualModel};
use crate::optimize::{multistart, Objective, OptimizeOutcome, OptimizerConfig};
use crate::result::{EstimateResult, Method, ParamVector};
use crate::sample::Sample;

pub struct MddObjective<'a> {
    pub model: &'a dyn ResidualModel,
    pub sample: &'a Sample,
    pub dist: &'a DistanceMatrix,
}

impl Objective for MddObjective<'_> {
    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        mdd_objective(self.model, self.sample, self.dist, x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        mdd_value_and_gradient(self.model, self.sample, self.dist, x)
    }
}

pub struct DlObjective<'a> {
    pub model: &'a dyn ResidualModel,
    pub sample: &'a Sample,
    pub state: &'a DlObjectiveState,
}

impl Objective for DlObjective<'_> {
    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        dl_objective(self.model, self.sample, self.state, x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        dl_value_and_gradient(self.model, self.sample, self.state, x)
    }
}

fn start_for(model: &dyn ResidualModel, sample: &Sample) -> Vec<f64> {
    model
        .warm_start(sample)
        .filter(|v| v.len() == model.param_dim() && v.iter().all(|x| x.is_finite()))
        .unwrap_or_else(|| vec![0.0; model.param_dim()])
}

/// A covariance failure is fatal at a converged optimum and reported as NaN
/// otherwise, since the non-convergence is the more useful diagnostic.
fn covariance_or_nan(converged: bool, d: usize, cov: Result<Covariance>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    match cov {
        Ok(c) => Ok((c.vcov, c.std_errors)),
        Err(e) if converged => Err(e),
        Err(_) => Ok((DMatrix::from_element(d, d, f64::NAN), vec![f64::NAN; d])),
    }
}

/// Largest Gauss-Newton step, relative to `max(1, |theta|)`, at which an
/// optimizer stop counts as converged.
pub const NEWTON_STEP_TOL: f64 = 1e-3;

/// Whether the Gauss-Newton step `curvature^{-1} grad / 2` is negligible.
///
/// A small gradient alone also occurs far out on a plateau of the objective,
/// e.g. a saturated sigmoid index; there the curvature vanishes faster than
/// the gradient and the step is huge.
pub fn newton_step_settled(curvature: &DMatrix<f64>, grad: &[f64], theta: &[f64]) -> bool {
    if grad.is_empty() {
        return true;
    }
    let g = DVector::from_column_slice(grad);
    let Some(step) = curvature.clone().lu().solve(&g) else {
        return false;
    };
    let size = 0.5 * step.norm();
    let scale = theta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    size.is_finite() && size <= NEWTON_STEP_TOL * scale
}

/// One-step MDD estimator. Models with an intercept partition are rejected
/// because `MDD_n` does not depend on the intercepts; use
/// [`estimate_two_step`] for those.
pub fn estimate_mdd(model: &dyn ResidualModel, sample: &Sample, cfg: &OptimizerConfig) -> Result<EstimateResult> {
    check_compatible(model, sample)?;
    let dist = DistanceMatrix::from_sample(sample);
    estimate_mdd_with(model, sample, &dist, cfg)
}

pub fn estimate_mdd_with(
    model: &dyn ResidualModel,
    sample: &Sample,
    dist: &DistanceMatrix,
    cfg: &OptimizerConfig,
) -> Result<EstimateResult> {
    check_compatible(model, sample)?;
    if model.intercepts().is_some_and(|m| m.d1 > 0) {
        return Err(Error::InterceptsNotIdentified);
    }
    let obj = MddObjective { model, sample, dist };
    let out = multistart(&obj, &start_for(model, sample), cfg)?;
    let mut settled = true;
    let cov = match vcov_theorem2(model, sample, dist, &out.x) {
        Ok((c, parts)) => {
            let (_, g) = obj.value_and_gradient(&out.x)?;
            settled = newton_step_settled(&parts.omega, &g, &out.x);
            Ok(c)
        }
        Err(e) => Err(e),
    };
    let (vcov, std_errors) = covariance_or_nan(out.converged, out.x.len(), cov)?;
    Ok(EstimateResult {
        theta_hat: ParamVector {
            values: out.x,
            d1: None,
        },
        param_names: model.param_names(),
        vcov,
        std_errors,
        objective_value: out.value,
        converged: out.converged && settled,
        iterations: out.iterations,
        method: Method::Mdd,
    })
}

/// The moment matrices of the closed-form estimator for
/// `h_t = Z1_t - Gamma Z2_t`, `vec(Gamma) = Xi1^{-1} Xi2` (row-major `vec`).
/// `Xi1 = I_l kron C`; only `C` (`k2 x k2`) is returned.
pub fn closed_form_moments(sample: &Sample, l: usize, dist: &DistanceMatrix) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (n, k) = (sample.n(), sample.k());
    if k <= l {
        return Err(Error::Shape(format!("need k > l columns in Z, got k = {k}, l = {l}")));
    }
    if dist.n() != n {
        return Err(Error::Shape(format!("distance matrix has {} rows, sample has {n}", dist.n())));
    }
    let k2 = k - l;
    let mut z1 = Vec::with_capacity(n * l);
    let mut z2 = Vec::with_capacity(n * k2);
    for t in 0..n {
        let row = sample.z_row(t);
        z1.extend_from_slice(&row[..l]);
        z2.extend_from_slice(&row[l..]);
    }
    let c = centered(&z2, n, k2);
    let e = centered(&z1, n, l);
    let wc = distance_weighted(&c, k2, dist);
    let r = distance_weighted(&e, l, dist);
    let mut big_c = DMatrix::zeros(k2, k2);
    let mut xi2 = DVector::zeros(l * k2);
    for t in 0..n {
        let ct = &c[t * k2..(t + 1) * k2];
        let wt = &wc[t * k2..(t + 1) * k2];
        let rt = &r[t * l..(t + 1) * l];
        for a in 0..k2 {
            for b in 0..k2 {
                big_c[(a, b)] += ct[a] * wt[b];
            }
        }
        for i in 0..l {
            for j in 0..k2 {
                xi2[i * k2 + j] += ct[j] * rt[i];
            }
        }
    }
    Ok((big_c, xi2))
}

/// Closed-form MDD estimator for `h_t = Z1_t - Gamma Z2_t` where the first
/// `l` columns of `Z` are `Z1`. With `x_equals_z2` the conditioning set is
/// `Z2` itself; otherwise the sample's `X` is used.
pub fn closed_form_linear(sample: &Sample, l: usize, x_equals_z2: bool) -> Result<EstimateResult> {
    let k = sample.k();
    let k2 = k.checked_sub(l).filter(|&v| v > 0).ok_or_else(|| {
        Error::Shape(format!("need k > l columns in Z, got k = {k}, l = {l}"))
    })?;
    let dist = if x_equals_z2 {
        let pts: Vec<f64> = (0..sample.n()).flat_map(|t| sample.z_row(t)[l..].to_vec()).collect();
        DistanceMatrix::from_points(&pts, k2)
    } else {
        DistanceMatrix::from_sample(sample)
    };
    let (c, xi2) = closed_form_moments(sample, l, &dist)?;
    let cinv = guarded_inverse(&c, "C").map_err(|_| {
        Error::Singular(format!(
            "unidentified: degenerate regressor/conditioning geometry (condition number above {CONDITION_LIMIT:e})"
        ))
    })?;
    let mut theta = Vec::with_capacity(l * k2);
    for i in 0..l {
        let block = xi2.rows(i * k2, k2);
        theta.extend((&cinv * block).iter().copied());
    }

    let model = crate::builtin::builtin_model(&crate::builtin::ModelSpec::LinearNoIntercept { l, k2 })?;
    let fit_sample;
    let sample_for_cov = if x_equals_z2 {
        let pts: Vec<f64> = (0..sample.n()).flat_map(|t| sample.z_row(t)[l..].to_vec()).collect();
        fit_sample = sample.with_conditioning(pts, k2)?;
        &fit_sample
    } else {
        sample
    };
    let objective_value = mdd_objective(model.as_ref(), sample_for_cov, &dist, &theta)?;
    let (cov, _) = vcov_theorem2(model.as_ref(), sample_for_cov, &dist, &theta)?;
    Ok(EstimateResult {
        theta_hat: ParamVector {
            values: theta,
            d1: None,
        },
        param_names: model.param_names(),
        vcov: cov.vcov,
        std_errors: cov.std_errors,
        objective_value,
        converged: true,
        iterations: 0,
        method: Method::MddClosedForm,
    })
}

/// Two-step estimator: `theta2` minimizes MDD of the intercept-free part
/// `m(theta2)`, then the intercepts are set so the first `d1` residual
/// coordinates average to zero.
pub fn estimate_two_step(model: &dyn ResidualModel, sample: &Sample, cfg: &OptimizerConfig) -> Result<EstimateResult> {
    check_compatible(model, sample)?;
    let map = model.intercepts().ok_or(Error::MissingInterceptPartition)?;
    let m_model = InterceptFree::new(model)?;
    let dist = DistanceMatrix::from_sample(sample);
    let d2 = m_model.param_dim();
    let out = if d2 > 0 {
        let obj = MddObjective {
            model: &m_model,
            sample,
            dist: &dist,
        };
        multistart(&obj, &start_for(&m_model, sample), cfg)?
    } else {
        OptimizeOutcome {
            x: vec![],
            value: mdd_objective(&m_model, sample, &dist, &[])?,
            grad_norm: 0.0,
            converged: true,
            iterations: 0,
            trace: vec![],
            start_index: 0,
        }
    };

    let mut theta = vec![0.0; map.d1];
    let mut settled = true;
    let (vcov, std_errors) = match vcov_theorem3(model, sample, &dist, &out.x) {
        Ok(c) => {
            if d2 > 0 {
                let (_, g) = mdd_value_and_gradient(&m_model, sample, &dist, &out.x)?;
                settled = newton_step_settled(&c.parts.omega2, &g, &out.x);
            }
            theta.copy_from_slice(&c.theta1_hat);
            (c.cov.vcov, c.cov.std_errors)
        }
        Err(e) if out.converged => return Err(e),
        Err(_) => {
            let ev = crate::model::evaluate(&m_model, sample, &out.x, false)?;
            let means = crate::mdd::column_means(&ev.h, ev.n, ev.l);
            for i in 0..map.d1 {
                theta[i] = -map.sign * means[i];
            }
            let d = map.d1 + d2;
            (DMatrix::from_element(d, d, f64::NAN), vec![f64::NAN; d])
        }
    };
    theta.extend_from_slice(&out.x);
    Ok(EstimateResult {
        theta_hat: ParamVector {
            values: theta,
            d1: Some(map.d1),
        },
        param_names: model.param_names(),
        vcov,
        std_errors,
        objective_value: out.value,
        converged: out.converged && settled,
        iterations: out.iterations,
        method: Method::MddTwoStep,
    })
}

/// DL estimator with its sample-analog sandwich covariance. Intercepts are
/// identified under DL, so intercept models are estimated jointly.
pub fn estimate_dl(model: &dyn ResidualModel, sample: &Sample, cfg: &OptimizerConfig) -> Result<EstimateResult> {
    check_compatible(model, sample)?;
    let state = DlObjectiveState::from_sample(sample);
    let obj = DlObjective {
        model,
        sample,
        state: &state,
    };
    let out = multistart(&obj, &start_for(model, sample), cfg)?;
    let mut settled = true;
    let cov = match vcov_dl_with(model, sample, &state, &out.x) {
        Ok((c, parts)) => {
            let (_, g) = obj.value_and_gradient(&out.x)?;
            settled = newton_step_settled(&parts.a_hat, &g, &out.x);
            Ok(c)
        }
        Err(e) => Err(e),
    };
    let (vcov, std_errors) = covariance_or_nan(out.converged, out.x.len(), cov)?;
    Ok(EstimateResult {
        theta_hat: ParamVector {
            values: out.x,
            d1: model.intercepts().map(|m| m.d1),
        },
        param_names: model.param_names(),
        vcov,
        std_errors,
        objective_value: out.value,
        converged: out.converged && settled,
        iterations: out.iterations,
        method: Method::Dl,
    })
}
