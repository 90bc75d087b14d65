//! The residual-model abstraction `h(Z_t, theta)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Which residual coordinates carry intercepts.
///
/// For a partitioned model `theta = (theta1, theta2)` with `d1` intercepts,
/// `h(Z, theta) = (sign * theta1, 0) + m(Z, theta2)`. `sign` is `-1` for the
/// usual `y - c - ...` regression form and `+1` for the canonical form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterceptMap {
    pub d1: usize,
    pub sign: f64,
}

/// Linear map from the fitted parameterization to the one shown to users:
/// `reported = matrix * theta`.
#[derive(Clone, Debug)]
pub struct Reparam {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
}

/// A conditional moment model. Implementations must be pure.
///
/// `residual` writes `h(z, theta)` (length `output_dim`); `jacobian` writes
/// `dh/dtheta` row-major as `output_dim x param_dim`.
pub trait ResidualModel: Send + Sync {
    fn output_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// Number of `Z_t` columns the model reads.
    fn input_dim(&self) -> usize;

    fn residual(&self, z: &[f64], theta: &[f64], out: &mut [f64]);

    fn jacobian(&self, z: &[f64], theta: &[f64], out: &mut [f64]);

    fn intercepts(&self) -> Option<InterceptMap> {
        None
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.param_dim()).map(|i| format!("theta{i}")).collect()
    }

    /// A data-driven starting point, e.g. least squares for models linear in
    /// `theta`.
    fn warm_start(&self, _sample: &Sample) -> Option<Vec<f64>> {
        None
    }

    fn reporting(&self) -> Option<Reparam> {
        None
    }
}

impl fmt::Debug for dyn ResidualModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResidualModel")
            .field("l", &self.output_dim())
            .field("d", &self.param_dim())
            .field("k", &self.input_dim())
            .field("intercepts", &self.intercepts())
            .finish()
    }
}

pub(crate) fn check_compatible(model: &dyn ResidualModel, sample: &Sample) -> Result<()> {
    if model.input_dim() > sample.k() {
        return Err(Error::Shape(format!(
            "model reads {} Z columns but the sample has {}",
            model.input_dim(),
            sample.k()
        )));
    }
    if let Some(map) = model.intercepts() {
        if map.d1 > model.output_dim() || map.d1 > model.param_dim() {
            return Err(Error::InvalidModel(format!(
                "intercept count d1 = {} exceeds l = {} or d = {}",
                map.d1,
                model.output_dim(),
                model.param_dim()
            )));
        }
    }
    Ok(())
}

/// Residuals (and optionally Jacobians) of every row at one `theta`.
#[derive(Clone, Debug)]
pub struct Evaluated {
    pub n: usize,
    pub l: usize,
    pub d: usize,
    /// `n x l`, row-major.
    pub h: Vec<f64>,
    /// `n x l x d`, row-major per observation; empty unless requested.
    pub jac: Vec<f64>,
}

impl Evaluated {
    pub fn h_row(&self, t: usize) -> &[f64] {
        &self.h[t * self.l..(t + 1) * self.l]
    }

    pub fn jac_row(&self, t: usize) -> &[f64] {
        let s = self.l * self.d;
        &self.jac[t * s..(t + 1) * s]
    }
}

pub fn evaluate(
    model: &dyn ResidualModel,
    sample: &Sample,
    theta: &[f64],
    with_jacobian: bool,
) -> Result<Evaluated> {
    let (n, l, d) = (sample.n(), model.output_dim(), model.param_dim());
    if theta.len() != d {
        return Err(Error::Shape(format!(
            "theta has length {} but the model has {d} parameters",
            theta.len()
        )));
    }
    check_compatible(model, sample)?;
    let mut h = vec![0.0; n * l];
    let mut jac = if with_jacobian {
        vec![0.0; n * l * d]
    } else {
        Vec::new()
    };
    for t in 0..n {
        let z = sample.z_row(t);
        let row = &mut h[t * l..(t + 1) * l];
        model.residual(z, theta, row);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteResidual { row: t });
        }
        if with_jacobian {
            let jr = &mut jac[t * l * d..(t + 1) * l * d];
            model.jacobian(z, theta, jr);
            if jr.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteResidual { row: t });
            }
        }
    }
    Ok(Evaluated { n, l, d, h, jac })
}

/// The non-intercept part `m(Z, theta2) = h(Z, (0, theta2))` of a
/// partitioned model, itself a residual model in `theta2`.
pub struct InterceptFree<'a> {
    inner: &'a dyn ResidualModel,
    d1: usize,
}

impl<'a> InterceptFree<'a> {
    pub fn new(inner: &'a dyn ResidualModel) -> Result<Self> {
        let map = inner.intercepts().ok_or(Error::MissingInterceptPartition)?;
        Ok(Self { inner, d1: map.d1 })
    }

    fn full_theta(&self, theta2: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.d1];
        full.extend_from_slice(theta2);
        full
    }
}

impl ResidualModel for InterceptFree<'_> {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim() - self.d1
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn residual(&self, z: &[f64], theta2: &[f64], out: &mut [f64]) {
        self.inner.residual(z, &self.full_theta(theta2), out);
    }

    fn jacobian(&self, z: &[f64], theta2: &[f64], out: &mut [f64]) {
        let (l, d) = (self.inner.output_dim(), self.inner.param_dim());
        let mut full = vec![0.0; l * d];
        self.inner.jacobian(z, &self.full_theta(theta2), &mut full);
        let d2 = d - self.d1;
        for i in 0..l {
            out[i * d2..(i + 1) * d2].copy_from_slice(&full[i * d + self.d1..(i + 1) * d]);
        }
    }

    fn param_names(&self) -> Vec<String> {
        self.inner.param_names().split_off(self.d1)
    }

    fn warm_start(&self, sample: &Sample) -> Option<Vec<f64>> {
        self.inner
            .warm_start(sample)
            .map(|mut v| v.split_off(self.d1))
    }
}

type EvalFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// A user-supplied model built from closures.
#[derive(Clone)]
pub struct ClosureModel {
    l: usize,
    d: usize,
    k: usize,
    residual: Arc<EvalFn>,
    jacobian: Arc<EvalFn>,
    intercepts: Option<InterceptMap>,
    names: Option<Vec<String>>,
}

impl ClosureModel {
    pub fn new<R, J>(l: usize, d: usize, k: usize, residual: R, jacobian: J) -> Self
    where
        R: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        J: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            l,
            d,
            k,
            residual: Arc::new(residual),
            jacobian: Arc::new(jacobian),
            intercepts: None,
            names: None,
        }
    }

    pub fn with_intercepts(mut self, map: InterceptMap) -> Result<Self> {
        if map.d1 > self.l || map.d1 > self.d {
            return Err(Error::InvalidModel(format!(
                "d1 = {} must not exceed l = {} or d = {}",
                map.d1, self.l, self.d
            )));
        }
        self.intercepts = Some(map);
        Ok(self)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }
}

impl ResidualModel for ClosureModel {
    fn output_dim(&self) -> usize {
        self.l
    }

    fn param_dim(&self) -> usize {
        self.d
    }

    fn input_dim(&self) -> usize {
        self.k
    }

    fn residual(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        (self.residual)(z, theta, out)
    }

    fn jacobian(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        (self.jacobian)(z, theta, out)
    }

    fn intercepts(&self) -> Option<InterceptMap> {
        self.intercepts
    }

    fn param_names(&self) -> Vec<String> {
        match &self.names {
            Some(n) => n.clone(),
            None => (1..=self.d).map(|i| format!("theta{i}")).collect(),
        }
    }
}

/// Largest relative discrepancy between the analytic Jacobian and central
/// finite differences (step `1e-6 * max(1, |theta_j|)`) over `points` random
/// `(row, theta)` draws, with `theta` drawn uniformly from `theta_center +/- spread`.
pub fn jacobian_discrepancy<R: Rng>(
    model: &dyn ResidualModel,
    sample: &Sample,
    theta_center: &[f64],
    spread: f64,
    points: usize,
    rng: &mut R,
) -> f64 {
    let (l, d) = (model.output_dim(), model.param_dim());
    let mut worst: f64 = 0.0;
    let mut jac = vec![0.0; l * d];
    let mut up = vec![0.0; l];
    let mut down = vec![0.0; l];
    for _ in 0..points {
        let t = rng.random_range(0..sample.n());
        let theta: Vec<f64> = theta_center
            .iter()
            .map(|c| c + spread * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let z = sample.z_row(t);
        model.jacobian(z, &theta, &mut jac);
        for j in 0..d {
            let step = 1e-6 * theta[j].abs().max(1.0);
            let mut tp = theta.clone();
            tp[j] += step;
            model.residual(z, &tp, &mut up);
            tp[j] = theta[j] - step;
            model.residual(z, &tp, &mut down);
            for i in 0..l {
                let fd = (up[i] - down[i]) / (2.0 * step);
                let an = jac[i * d + j];
                let err = (fd - an).abs() / an.abs().max(1.0);
                worst = worst.max(err);
            }
        }
    }
    worst
}

/// Largest violation of `h(theta) - h((0, theta2)) = (sign * theta1, 0)` over
/// all rows of `sample`.
pub fn intercept_structure_gap(model: &dyn ResidualModel, sample: &Sample, theta: &[f64]) -> Result<f64> {
    let map = model.intercepts().ok_or(Error::MissingInterceptPartition)?;
    let l = model.output_dim();
    let mut zeroed = theta.to_vec();
    zeroed[..map.d1].iter_mut().for_each(|v| *v = 0.0);
    let full = evaluate(model, sample, theta, false)?;
    let stripped = evaluate(model, sample, &zeroed, false)?;
    let mut worst: f64 = 0.0;
    for t in 0..sample.n() {
        for i in 0..l {
            let expected = if i < map.d1 { map.sign * theta[i] } else { 0.0 };
            let diff = full.h_row(t)[i] - stripped.h_row(t)[i];
            worst = worst.max((diff - expected).abs());
        }
    }
    Ok(worst)
}
