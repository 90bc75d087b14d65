//! Built-in residual models: linear regressions, AR/VAR, TAR and the scalar
//! index models used in the simulation designs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InterceptMap, Reparam, ResidualModel};
use crate::sample::Sample;

/// Tagged description of a built-in model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// `h = Z1 - Gamma Z2`, `Z = (Z1 (l), Z2 (k2))`, `theta = vec(Gamma)` row by row.
    LinearNoIntercept { l: usize, k2: usize },
    /// `h = Z1 - theta1 - Gamma Z2`, `theta = (theta1 (l), vec(Gamma))`.
    LinearWithIntercept { l: usize, k2: usize },
    /// `h = Z1 - sin(theta Z2)`.
    SinIndex,
    /// `h = Z1 - 1 / (1 + exp(-theta Z2))`.
    SigmoidIndex,
    /// `h = Z1 - theta^2 Z2 - theta Z2^2`.
    QuadraticIndex,
    /// `Z = (Y_t, Y_{t-1}, ..., Y_{t-p})`.
    Ar { p: usize, intercept: bool },
    /// `Z = (Y_t, Y_{t-1}, ..., Y_{t-p})`, each block of width `dim`.
    Var { dim: usize, p: usize, intercept: bool },
    /// Two-regime threshold AR; the upper regime is `Y_{t-threshold_lag} > threshold`.
    /// `Z = (Y_t, Y_{t-1}, ..., Y_{t-L})` with `L = max(p, threshold_lag)`.
    Tar {
        p: usize,
        threshold_lag: usize,
        threshold: f64,
        intercept: bool,
    },
}

/// Dimensions and hyperparameters accompanying a model tag.
#[derive(Clone, Debug, Default)]
pub struct SpecOptions {
    pub l: Option<usize>,
    pub k2: Option<usize>,
    pub dim: Option<usize>,
    pub lags: Option<usize>,
    pub threshold_lag: Option<usize>,
    pub threshold: Option<f64>,
    pub intercept: Option<bool>,
}

impl ModelSpec {
    /// Resolve a model tag such as `linear-no-intercept` or `tar`.
    pub fn from_tag(tag: &str, opts: &SpecOptions) -> Result<Self> {
        let l = opts.l.unwrap_or(1);
        let k2 = opts.k2.unwrap_or(1);
        let p = opts.lags.unwrap_or(1);
        Ok(match tag {
            "linear-no-intercept" | "linear" | "multivariate-linear" => {
                ModelSpec::LinearNoIntercept { l, k2 }
            }
            "linear-with-intercept" | "linear-intercept" => ModelSpec::LinearWithIntercept { l, k2 },
            "sin-index" => ModelSpec::SinIndex,
            "sigmoid-index" => ModelSpec::SigmoidIndex,
            "quadratic-index" => ModelSpec::QuadraticIndex,
            "ar" => ModelSpec::Ar {
                p,
                intercept: opts.intercept.unwrap_or(false),
            },
            "var" => ModelSpec::Var {
                dim: opts.dim.unwrap_or(l),
                p,
                intercept: opts.intercept.unwrap_or(true),
            },
            "tar" => ModelSpec::Tar {
                p,
                threshold_lag: opts.threshold_lag.unwrap_or(1),
                threshold: opts.threshold.unwrap_or(0.0),
                intercept: opts.intercept.unwrap_or(true),
            },
            other => return Err(Error::UnknownModel(other.to_string())),
        })
    }

    /// Largest lag the model reads, zero for static regressions.
    pub fn max_lag(&self) -> usize {
        match *self {
            ModelSpec::Ar { p, .. } | ModelSpec::Var { p, .. } => p,
            ModelSpec::Tar { p, threshold_lag, .. } => p.max(threshold_lag),
            _ => 0,
        }
    }
}

pub fn builtin_model(spec: &ModelSpec) -> Result<Box<dyn ResidualModel>> {
    Ok(match *spec {
        ModelSpec::LinearNoIntercept { l, k2 } => Box::new(LinearModel::new(l, k2, false)?),
        ModelSpec::LinearWithIntercept { l, k2 } => Box::new(LinearModel::new(l, k2, true)?),
        ModelSpec::SinIndex => Box::new(IndexModel { link: Link::Sin }),
        ModelSpec::SigmoidIndex => Box::new(IndexModel { link: Link::Sigmoid }),
        ModelSpec::QuadraticIndex => Box::new(QuadraticIndexModel),
        ModelSpec::Ar { p, intercept } => {
            if p == 0 {
                return Err(Error::InvalidModel("ar needs p >= 1".into()));
            }
            let mut names: Vec<String> = Vec::new();
            if intercept {
                names.push("c".into());
            }
            names.extend((1..=p).map(|i| format!("phi{i}")));
            Box::new(LinearModel::new(1, p, intercept)?.with_names(names))
        }
        ModelSpec::Var { dim, p, intercept } => {
            if p == 0 || dim == 0 {
                return Err(Error::InvalidModel("var needs p >= 1 and dim >= 1".into()));
            }
            let mut names: Vec<String> = Vec::new();
            if intercept {
                names.extend((1..=dim).map(|i| format!("A0[{i}]")));
            }
            for i in 1..=dim {
                for lag in 1..=p {
                    names.extend((1..=dim).map(|j| format!("A{lag}[{i},{j}]")));
                }
            }
            Box::new(LinearModel::new(dim, dim * p, intercept)?.with_names(names))
        }
        ModelSpec::Tar {
            p,
            threshold_lag,
            threshold,
            intercept,
        } => {
            if p == 0 || threshold_lag == 0 {
                return Err(Error::InvalidModel(
                    "tar needs p >= 1 and threshold lag >= 1".into(),
                ));
            }
            if !threshold.is_finite() {
                return Err(Error::InvalidModel("tar threshold must be finite".into()));
            }
            Box::new(TarModel {
                p,
                threshold_lag,
                threshold,
                intercept,
            })
        }
    })
}

/// Least squares for models linear in `theta`: with `y = h(z, 0)` and
/// `X = -dh/dtheta`, solves `sum X'X theta = sum X'y`.
fn linear_least_squares(model: &dyn ResidualModel, sample: &Sample) -> Option<Vec<f64>> {
    let (l, d) = (model.output_dim(), model.param_dim());
    let zero = vec![0.0; d];
    let mut y = vec![0.0; l];
    let mut jac = vec![0.0; l * d];
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DVector::<f64>::zeros(d);
    for t in 0..sample.n() {
        let z = sample.z_row(t);
        model.residual(z, &zero, &mut y);
        model.jacobian(z, &zero, &mut jac);
        for i in 0..l {
            let row = &jac[i * d..(i + 1) * d];
            for a in 0..d {
                xty[a] -= row[a] * y[i];
                for b in 0..d {
                    xtx[(a, b)] += row[a] * row[b];
                }
            }
        }
    }
    let chol = xtx.cholesky()?;
    let sol = chol.solve(&xty);
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
}

#[derive(Clone, Debug)]
pub struct LinearModel {
    l: usize,
    k2: usize,
    intercept: bool,
    names: Option<Vec<String>>,
}

impl LinearModel {
    pub fn new(l: usize, k2: usize, intercept: bool) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidModel("linear model needs l >= 1".into()));
        }
        Ok(Self {
            l,
            k2,
            intercept,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    fn offset(&self) -> usize {
        if self.intercept {
            self.l
        } else {
            0
        }
    }
}

impl ResidualModel for LinearModel {
    fn output_dim(&self) -> usize {
        self.l
    }

    fn param_dim(&self) -> usize {
        self.offset() + self.l * self.k2
    }

    fn input_dim(&self) -> usize {
        self.l + self.k2
    }

    fn residual(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let off = self.offset();
        let z2 = &z[self.l..self.l + self.k2];
        for i in 0..self.l {
            let gamma = &theta[off + i * self.k2..off + (i + 1) * self.k2];
            let fit: f64 = gamma.iter().zip(z2).map(|(g, x)| g * x).sum();
            let c = if self.intercept { theta[i] } else { 0.0 };
            out[i] = z[i] - c - fit;
        }
    }

    fn jacobian(&self, z: &[f64], _theta: &[f64], out: &mut [f64]) {
        let d = self.param_dim();
        let off = self.offset();
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.l {
            if self.intercept {
                out[i * d + i] = -1.0;
            }
            for j in 0..self.k2 {
                out[i * d + off + i * self.k2 + j] = -z[self.l + j];
            }
        }
    }

    fn intercepts(&self) -> Option<InterceptMap> {
        self.intercept.then_some(InterceptMap {
            d1: self.l,
            sign: -1.0,
        })
    }

    fn param_names(&self) -> Vec<String> {
        if let Some(names) = &self.names {
            return names.clone();
        }
        let mut names = Vec::with_capacity(self.param_dim());
        if self.intercept {
            names.extend((1..=self.l).map(|i| format!("c[{i}]")));
        }
        for i in 1..=self.l {
            names.extend((1..=self.k2).map(|j| format!("gamma[{i},{j}]")));
        }
        names
    }

    fn warm_start(&self, sample: &Sample) -> Option<Vec<f64>> {
        linear_least_squares(self, sample)
    }
}

#[derive(Clone, Copy, Debug)]
enum Link {
    Sin,
    Sigmoid,
}

#[derive(Clone, Debug)]
struct IndexModel {
    link: Link,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ResidualModel for IndexModel {
    fn output_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn residual(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let u = theta[0] * z[1];
        out[0] = z[0]
            - match self.link {
                Link::Sin => u.sin(),
                Link::Sigmoid => sigmoid(u),
            };
    }

    fn jacobian(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let u = theta[0] * z[1];
        let slope = match self.link {
            Link::Sin => u.cos(),
            Link::Sigmoid => {
                let s = sigmoid(u);
                s * (1.0 - s)
            }
        };
        out[0] = -z[1] * slope;
    }
}

#[derive(Clone, Debug)]
struct QuadraticIndexModel;

impl ResidualModel for QuadraticIndexModel {
    fn output_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn residual(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let th = theta[0];
        out[0] = z[0] - th * th * z[1] - th * z[1] * z[1];
    }

    fn jacobian(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = -2.0 * theta[0] * z[1] - z[1] * z[1];
    }
}

/// Two-regime TAR(p). With an intercept the parameters are
/// `(c_low, c_high - c_low, phi_low (p), phi_high (p))`, so a single level
/// parameter carries the shift structure and the regime gap stays a slope.
#[derive(Clone, Debug)]
pub struct TarModel {
    p: usize,
    threshold_lag: usize,
    threshold: f64,
    intercept: bool,
}

impl TarModel {
    fn upper(&self, z: &[f64]) -> bool {
        z[self.threshold_lag] > self.threshold
    }

    fn phi_offset(&self) -> usize {
        if self.intercept {
            2
        } else {
            0
        }
    }
}

impl ResidualModel for TarModel {
    fn output_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        self.phi_offset() + 2 * self.p
    }

    fn input_dim(&self) -> usize {
        1 + self.p.max(self.threshold_lag)
    }

    fn residual(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let up = self.upper(z);
        let off = self.phi_offset() + if up { self.p } else { 0 };
        let mut fit: f64 = (1..=self.p).map(|i| theta[off + i - 1] * z[i]).sum();
        if self.intercept {
            fit += theta[0] + if up { theta[1] } else { 0.0 };
        }
        out[0] = z[0] - fit;
    }

    fn jacobian(&self, z: &[f64], _theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let up = self.upper(z);
        if self.intercept {
            out[0] = -1.0;
            out[1] = if up { -1.0 } else { 0.0 };
        }
        let off = self.phi_offset() + if up { self.p } else { 0 };
        for i in 1..=self.p {
            out[off + i - 1] = -z[i];
        }
    }

    fn intercepts(&self) -> Option<InterceptMap> {
        self.intercept.then_some(InterceptMap { d1: 1, sign: -1.0 })
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.intercept {
            names.push("c[low]".to_string());
            names.push("c[high]-c[low]".to_string());
        }
        for regime in ["low", "high"] {
            names.extend((1..=self.p).map(|i| format!("phi{i}[{regime}]")));
        }
        names
    }

    fn warm_start(&self, sample: &Sample) -> Option<Vec<f64>> {
        linear_least_squares(self, sample)
    }

    fn reporting(&self) -> Option<Reparam> {
        if !self.intercept {
            return None;
        }
        // (c_low, phi_low.., c_high, phi_high..)
        let d = self.param_dim();
        let p = self.p;
        let mut m = DMatrix::zeros(d, d);
        m[(0, 0)] = 1.0;
        for i in 0..p {
            m[(1 + i, 2 + i)] = 1.0;
        }
        m[(1 + p, 0)] = 1.0;
        m[(1 + p, 1)] = 1.0;
        for i in 0..p {
            m[(2 + p + i, 2 + p + i)] = 1.0;
        }
        let mut names = vec!["c[low]".to_string()];
        names.extend((1..=p).map(|i| format!("phi{i}[low]")));
        names.push("c[high]".to_string());
        names.extend((1..=p).map(|i| format!("phi{i}[high]")));
        Some(Reparam { names, matrix: m })
    }
}
