//! The sample MDD objective
//!
//! ```text
//! MDD_n(theta) = -(1/n^2) sum_t sum_s (h_t - hbar)'(h_s - hbar) |X_t - X_s|
//! ```
//!
//! its analytic gradient, and the uncentered ICM variant. The double sum is
//! evaluated as `-(1/n^2) sum_t a_t' w_t` with `a_t = h_t - hbar` and
//! `w_t = sum_s a_s |X_t - X_s|`, so no `n x n` residual product is formed.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{evaluate, Evaluated, ResidualModel};
use crate::sample::Sample;

/// Dense symmetric matrix of Euclidean distances between conditioning rows.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_sample(sample: &Sample) -> Self {
        Self::from_points(sample.x_data(), sample.q())
    }

    /// Distances between the rows of a row-major `n x dim` point set.
    pub fn from_points(points: &[f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut d = vec![0.0; n * n];
        for t in 0..n {
            let pt = &points[t * dim..(t + 1) * dim];
            for s in (t + 1)..n {
                let ps = &points[s * dim..(s + 1) * dim];
                let dist = if dim == 1 {
                    (pt[0] - ps[0]).abs()
                } else {
                    pt.iter()
                        .zip(ps)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                };
                d[t * n + s] = dist;
                d[s * n + t] = dist;
            }
        }
        Self { n, d }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.d[t * self.n + s]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.d[t * self.n..(t + 1) * self.n]
    }
}

/// The weight `w*(s) = 1 / (c_q |s|^{1+q})` with
/// `c_q = pi^{(1+q)/2} / Gamma((1+q)/2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightFunction {
    pub q: usize,
    pub c_q: f64,
}

impl WeightFunction {
    pub fn new(q: usize) -> Self {
        let a = (1.0 + q as f64) / 2.0;
        let c_q = (a * std::f64::consts::PI.ln() - ln_gamma(a)).exp();
        Self { q, c_q }
    }

    pub fn at(&self, s: &[f64]) -> f64 {
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        1.0 / (self.c_q * norm.powi(1 + self.q as i32))
    }
}

/// `ln Gamma(x)` for `x > 0`, Lanczos approximation (g = 7, 9 terms) with
/// reflection below 1/2.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Column means of a row-major `n x width` array.
pub(crate) fn column_means(data: &[f64], n: usize, width: usize) -> Vec<f64> {
    let mut mean = vec![0.0; width];
    for row in data.chunks_exact(width) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

/// `data - column means`.
pub(crate) fn centered(data: &[f64], n: usize, width: usize) -> Vec<f64> {
    let mean = column_means(data, n, width);
    let mut out = data.to_vec();
    for row in out.chunks_exact_mut(width) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    out
}

/// `w_t = sum_s a_s d[t][s]`, row-major `n x width`.
pub(crate) fn distance_weighted(a: &[f64], width: usize, dist: &DistanceMatrix) -> Vec<f64> {
    let n = dist.n();
    let mut w = vec![0.0; n * width];
    for t in 0..n {
        let drow = dist.row(t);
        let wt = &mut w[t * width..(t + 1) * width];
        if width == 1 {
            wt[0] = drow.iter().zip(a).map(|(d, v)| d * v).sum();
            continue;
        }
        for (s, &dts) in drow.iter().enumerate() {
            let as_ = &a[s * width..(s + 1) * width];
            for (w, v) in wt.iter_mut().zip(as_) {
                *w += dts * v;
            }
        }
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Centered residuals, their distance-weighted sums and the objective value.
#[derive(Clone, Debug)]
pub struct MddPass {
    pub centered: Vec<f64>,
    pub weighted: Vec<f64>,
    pub value: f64,
}

/// Objective from an `n x l` residual array.
pub fn mdd_pass(h: &[f64], l: usize, dist: &DistanceMatrix) -> MddPass {
    let n = dist.n();
    let a = centered(h, n, l);
    let w = distance_weighted(&a, l, dist);
    let value = -dot(&a, &w) / (n * n) as f64;
    MddPass {
        centered: a,
        weighted: w,
        value,
    }
}

fn check_dist(sample: &Sample, dist: &DistanceMatrix) -> Result<()> {
    if dist.n() != sample.n() {
        return Err(Error::Shape(format!(
            "distance matrix is {} x {} but the sample has {} rows",
            dist.n(),
            dist.n(),
            sample.n()
        )));
    }
    Ok(())
}

pub fn mdd_objective(
    model: &dyn ResidualModel,
    sample: &Sample,
    dist: &DistanceMatrix,
    theta: &[f64],
) -> Result<f64> {
    check_dist(sample, dist)?;
    let ev = evaluate(model, sample, theta, false)?;
    Ok(mdd_pass(&ev.h, ev.l, dist).value)
}

/// Gradient `-(2/n^2) sum_t (J_t - Jbar)' w_t` from an evaluation with Jacobians.
pub fn mdd_gradient_from(ev: &Evaluated, pass: &MddPass) -> Vec<f64> {
    let (n, l, d) = (ev.n, ev.l, ev.d);
    let jbar = column_means(&ev.jac, n, l * d);
    let mut grad = vec![0.0; d];
    for t in 0..n {
        let jt = ev.jac_row(t);
        let wt = &pass.weighted[t * l..(t + 1) * l];
        for i in 0..l {
            for j in 0..d {
                grad[j] += (jt[i * d + j] - jbar[i * d + j]) * wt[i];
            }
        }
    }
    let scale = -2.0 / (n * n) as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    grad
}

pub fn mdd_value_and_gradient(
    model: &dyn ResidualModel,
    sample: &Sample,
    dist: &DistanceMatrix,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_dist(sample, dist)?;
    let ev = evaluate(model, sample, theta, true)?;
    let pass = mdd_pass(&ev.h, ev.l, dist);
    let grad = mdd_gradient_from(&ev, &pass);
    Ok((pass.value, grad))
}

pub fn mdd_gradient(
    model: &dyn ResidualModel,
    sample: &Sample,
    dist: &DistanceMatrix,
    theta: &[f64],
) -> Result<Vec<f64>> {
    mdd_value_and_gradient(model, sample, dist, theta).map(|(_, g)| g)
}

/// `ICM_n(theta) = -(1/n^2) sum_t sum_s h_t' h_s |X_t - X_s|`, no centering.
pub fn icm_objective(
    model: &dyn ResidualModel,
    sample: &Sample,
    dist: &DistanceMatrix,
    theta: &[f64],
) -> Result<f64> {
    check_dist(sample, dist)?;
    let ev = evaluate(model, sample, theta, false)?;
    let n = sample.n();
    let w = distance_weighted(&ev.h, ev.l, dist);
    Ok(-dot(&ev.h, &w) / (n * n) as f64)
}

/// `G_n(s, theta) = (1/n) sum_t (h_t - hbar) exp(i <s, X_t>)` on a grid of
/// frequencies.
#[derive(Clone, Debug)]
pub struct CharProcessGrid {
    pub s_points: Vec<Vec<f64>>,
    pub values: Vec<Vec<Complex64>>,
}

impl CharProcessGrid {
    pub fn evaluate(
        model: &dyn ResidualModel,
        sample: &Sample,
        theta: &[f64],
        s_points: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let ev = evaluate(model, sample, theta, false)?;
        let a = centered(&ev.h, ev.n, ev.l);
        let values = s_points
            .iter()
            .map(|s| char_process(&a, ev.l, sample, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { s_points, values })
    }

    /// `(2/n) sum_t |h_t - hbar|`, an upper bound on every `|G_n(s)|`.
    pub fn modulus_bound(model: &dyn ResidualModel, sample: &Sample, theta: &[f64]) -> Result<f64> {
        let ev = evaluate(model, sample, theta, false)?;
        let a = centered(&ev.h, ev.n, ev.l);
        Ok(2.0 / ev.n as f64
            * a.chunks_exact(ev.l)
                .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum::<f64>())
    }
}

pub(crate) fn char_process(a: &[f64], l: usize, sample: &Sample, s: &[f64]) -> Result<Vec<Complex64>> {
    if s.len() != sample.q() {
        return Err(Error::Shape(format!(
            "frequency has dimension {} but X has {}",
            s.len(),
            sample.q()
        )));
    }
    let n = sample.n();
    let mut g = vec![Complex64::new(0.0, 0.0); l];
    for t in 0..n {
        let phase = dot(s, sample.x_row(t));
        let e = Complex64::new(phase.cos(), phase.sin());
        for (gi, ai) in g.iter_mut().zip(&a[t * l..(t + 1) * l]) {
            *gi += e * ai;
        }
    }
    g.iter_mut().for_each(|v| *v /= n as f64);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{builtin_model, ModelSpec};
    use crate::model::ClosureModel;

    #[test]
    fn scalar_distances() {
        let d = DistanceMatrix::from_points(&[0.0, 2.0], 1);
        assert_eq!(d.row(0), &[0.0, 2.0]);
        assert_eq!(d.row(1), &[2.0, 0.0]);
    }

    #[test]
    fn three_four_five() {
        let d = DistanceMatrix::from_points(&[0.0, 0.0, 3.0, 4.0], 2);
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
    }

    #[test]
    fn c1_is_pi() {
        let w = WeightFunction::new(1);
        assert!((w.c_q - std::f64::consts::PI).abs() < 1e-14);
        // c_2 = pi^{3/2} / Gamma(3/2) = pi^{3/2} / (sqrt(pi)/2) = 2 pi
        let w2 = WeightFunction::new(2);
        assert!((w2.c_q - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-13);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    // h_t = z_t[0] - theta * z_t[1]
    fn slope_model() -> ClosureModel {
        ClosureModel::new(
            1,
            1,
            2,
            |z, th, out| out[0] = z[0] - th[0] * z[1],
            |z, _th, out| out[0] = -z[1],
        )
    }

    #[test]
    fn two_point_hand_value() {
        // h = (1, 3), X = (0, 2): MDD = (h1 - h2)^2 |X1 - X2| / 8 = 4 * 2 / 8
        let model = slope_model();
        let s = Sample::new(vec![1.0, 0.0, 3.0, 1.0], 2, vec![0.0, 2.0], 1).unwrap();
        let dist = DistanceMatrix::from_sample(&s);
        let v = mdd_objective(&model, &s, &dist, &[0.0]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn two_point_hand_gradient() {
        // h(theta) = (1 - 0 theta, 3 - 1 theta): MDD = (2 - theta)^2 * 2 / 8,
        // derivative -(2 - theta) / 2, i.e. -1 at theta = 0.
        let model = slope_model();
        let s = Sample::new(vec![1.0, 0.0, 3.0, 1.0], 2, vec![0.0, 2.0], 1).unwrap();
        let dist = DistanceMatrix::from_sample(&s);
        let g = mdd_gradient(&model, &s, &dist, &[0.0]).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15, "{g:?}");
        let g = mdd_gradient(&model, &s, &dist, &[0.5]).unwrap();
        assert!((g[0] + 0.75).abs() < 1e-15, "{g:?}");
    }

    #[test]
    fn constant_residuals_give_zero() {
        let model = builtin_model(&ModelSpec::LinearNoIntercept { l: 1, k2: 1 }).unwrap();
        // z1 = 2 z2 + 5 exactly, theta = 2 leaves h = 5 for every row
        let z2: Vec<f64> = (0..10).map(|t| (t as f64).sqrt()).collect();
        let z1: Vec<f64> = z2.iter().map(|v| 2.0 * v + 5.0).collect();
        let s = Sample::scalar_regression(&z1, &z2).unwrap();
        let dist = DistanceMatrix::from_sample(&s);
        assert!(mdd_objective(model.as_ref(), &s, &dist, &[2.0]).unwrap().abs() < 1e-14);
        let g = mdd_gradient(model.as_ref(), &s, &dist, &[2.0]).unwrap();
        assert!(g[0].abs() < 1e-14);
    }

    #[test]
    fn theta_free_model_has_zero_gradient() {
        let model = ClosureModel::new(1, 2, 1, |z, _t, o| o[0] = z[0], |_z, _t, o| o.fill(0.0));
        let s = Sample::new(vec![1.0, 4.0, 2.0, 8.0], 1, vec![0.0, 1.0, 3.0, 2.0], 1).unwrap();
        let dist = DistanceMatrix::from_sample(&s);
        assert_eq!(mdd_gradient(&model, &s, &dist, &[0.3, 0.1]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn icm_zero_residuals() {
        let model = ClosureModel::new(1, 1, 1, |z, t, o| o[0] = z[0] * t[0], |z, _t, o| o[0] = z[0]);
        let s = Sample::new(vec![1.0, 2.0, 3.0], 1, vec![0.0, 1.0, 2.0], 1).unwrap();
        let dist = DistanceMatrix::from_sample(&s);
        assert_eq!(icm_objective(&model, &s, &dist, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_distance_matrix() {
        let model = ClosureModel::new(1, 1, 1, |z, t, o| o[0] = z[0] * t[0], |z, _t, o| o[0] = z[0]);
        let s = Sample::new(vec![1.0, 2.0, 3.0], 1, vec![0.0, 1.0, 2.0], 1).unwrap();
        let dist = DistanceMatrix::from_points(&[0.0, 1.0], 1);
        assert!(mdd_objective(&model, &s, &dist, &[1.0]).is_err());
    }

    #[test]
    fn non_finite_residual_names_row() {
        let model = ClosureModel::new(1, 1, 1, |z, t, o| o[0] = t[0] / z[0], |z, _t, o| o[0] = 1.0 / z[0]);
        let s = Sample::new(vec![1.0, 0.0, 3.0], 1, vec![0.0, 1.0, 2.0], 1).unwrap();
        let dist = DistanceMatrix::from_sample(&s);
        match mdd_objective(&model, &s, &dist, &[1.0]).unwrap_err() {
            Error::NonFiniteResidual { row } => assert_eq!(row, 1),
            e => panic!("{e}"),
        }
    }
}
