//! Analytic sandwich covariances.
//!
//! For the one-step MDD estimator the asymptotic covariance is
//! `Omega^{-1} Sigma Omega^{-1}` with
//!
//! ```text
//! u(x)  = E{ [dh_t - E dh_t] |X_t - x| }
//! Omega = E{ [dh_t - E dh_t]' u(X_t) }
//! Sigma = E{ [u(X_t) - E u]' h_t h_t' [u(X_t) - E u] }
//! ```
//!
//! Every expectation is replaced by a sample mean at the estimate, and the
//! returned `vcov` is the finite-sample covariance (asymptotic one over `n`).

use nalgebra::{DMatrix, DVector};

use crate::dl::DlObjectiveState;
use crate::error::{Error, Result};
use crate::linalg::{guarded_inverse, symmetrize};
use crate::mdd::{centered, column_means, distance_weighted, DistanceMatrix};
use crate::model::{evaluate, Evaluated, InterceptFree, ResidualModel};
use crate::sample::Sample;

#[derive(Clone, Debug)]
pub struct Covariance {
    pub vcov: DMatrix<f64>,
    pub std_errors: Vec<f64>,
}

impl Covariance {
    fn from_asymptotic(mut v: DMatrix<f64>, n: usize) -> Self {
        symmetrize(&mut v);
        v /= n as f64;
        let std_errors = (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect();
        Self { vcov: v, std_errors }
    }

    /// Covariance of `matrix * theta`.
    pub fn transformed(&self, matrix: &DMatrix<f64>) -> Self {
        let mut v = matrix * &self.vcov * matrix.transpose();
        symmetrize(&mut v);
        let std_errors = (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect();
        Self { vcov: v, std_errors }
    }
}

#[derive(Clone, Debug)]
pub struct SandwichParts {
    /// `u_hat(X_t)` for every row, each `l x d`.
    pub u_hat: Vec<DMatrix<f64>>,
    pub omega: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

/// `u_hat(X_s) = (1/n) sum_t (J_t - Jbar) d[t][s]`, one `l x d` matrix per row.
pub(crate) fn u_hat_from(ev: &Evaluated, dist: &DistanceMatrix) -> Vec<DMatrix<f64>> {
    let (n, l, d) = (ev.n, ev.l, ev.d);
    let cj = centered(&ev.jac, n, l * d);
    let w = distance_weighted(&cj, l * d, dist);
    w.chunks_exact(l * d)
        .map(|c| DMatrix::from_row_slice(l, d, c) / n as f64)
        .collect()
}

pub fn u_hat(
    model: &dyn ResidualModel,
    sample: &Sample,
    dist: &DistanceMatrix,
    theta: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    let ev = evaluate(model, sample, theta, true)?;
    Ok(u_hat_from(&ev, dist))
}

fn mean_matrix(ms: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(ms[0].nrows(), ms[0].ncols());
    for m in ms {
        acc += m;
    }
    acc / ms.len() as f64
}

/// `Omega_hat`, `Sigma_hat` and `u_hat` from an evaluation with Jacobians;
/// `h` are the residual rows entering `Sigma_hat`.
fn sandwich_from(ev: &Evaluated, h: &[f64], dist: &DistanceMatrix) -> SandwichParts {
    let (n, l, d) = (ev.n, ev.l, ev.d);
    let u = u_hat_from(ev, dist);
    let jbar = DMatrix::from_row_slice(l, d, &column_means(&ev.jac, n, l * d));
    let ubar = mean_matrix(&u);
    let mut omega = DMatrix::zeros(d, d);
    let mut sigma = DMatrix::zeros(d, d);
    for t in 0..n {
        let jt = DMatrix::from_row_slice(l, d, ev.jac_row(t)) - &jbar;
        omega += jt.transpose() * &u[t];
        let ht = DVector::from_column_slice(&h[t * l..(t + 1) * l]);
        let v = (&u[t] - &ubar).transpose() * ht;
        sigma += &v * v.transpose();
    }
    omega /= n as f64;
    sigma /= n as f64;
    symmetrize(&mut omega);
    symmetrize(&mut sigma);
    SandwichParts {
        u_hat: u,
        omega,
        sigma,
    }
}

/// Sandwich covariance of the one-step MDD estimator.
pub fn vcov_theorem2(
    model: &dyn ResidualModel,
    sample: &Sample,
    dist: &DistanceMatrix,
    theta_hat: &[f64],
) -> Result<(Covariance, SandwichParts)> {
    let ev = evaluate(model, sample, theta_hat, true)?;
    let parts = sandwich_from(&ev, &ev.h, dist);
    let oinv = guarded_inverse(&parts.omega, "Omega")?;
    let v = &oinv * &parts.sigma * &oinv;
    Ok((Covariance::from_asymptotic(v, sample.n()), parts))
}

#[derive(Clone, Debug)]
pub struct TwoStepParts {
    pub u2_hat: Vec<DMatrix<f64>>,
    /// `l x d2`.
    pub omega1: DMatrix<f64>,
    /// `l x l`.
    pub sigma1: DMatrix<f64>,
    pub omega2: DMatrix<f64>,
    pub sigma2: DMatrix<f64>,
    /// Mean of `dm_1/dtheta_2`, `d1 x d2`.
    pub dm1_mean: DMatrix<f64>,
    /// Per-row influence maps `J_t`, each `d x l`.
    pub j_t: Vec<DMatrix<f64>>,
    /// Selector `(I_{d1}, 0)`, `d1 x l`.
    pub upsilon: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct TwoStepCovariance {
    pub cov: Covariance,
    pub theta1_hat: Vec<f64>,
    /// Asymptotic blocks from their closed forms (not divided by `n`),
    /// in the model's own sign convention.
    pub v1_closed: DMatrix<f64>,
    pub v2_closed: DMatrix<f64>,
    /// `(1/n) sum_t J_t h_t h_t' J_t'` in the model's sign convention.
    pub v_joint: DMatrix<f64>,
    pub parts: TwoStepParts,
}

/// Joint covariance of the two-step estimator `(theta1_hat, theta2_hat)`.
///
/// Internally works with the canonical form `h = (theta1, 0) + m(theta2)`;
/// a model with `sign = -1` has its intercept rows and columns flipped on
/// the way out.
pub fn vcov_theorem3(
    model: &dyn ResidualModel,
    sample: &Sample,
    dist: &DistanceMatrix,
    theta2_hat: &[f64],
) -> Result<TwoStepCovariance> {
    let map = model.intercepts().ok_or(Error::MissingInterceptPartition)?;
    let m_model = InterceptFree::new(model)?;
    let (n, l, d1) = (sample.n(), model.output_dim(), map.d1);
    let d2 = m_model.param_dim();
    let d = d1 + d2;
    let ev = evaluate(&m_model, sample, theta2_hat, true)?;

    // canonical intercepts theta1 = -mean(m_1); h = m with m_1 recentered
    let mbar = column_means(&ev.h, n, l);
    let theta1_canon: Vec<f64> = mbar[..d1].iter().map(|v| -v).collect();
    let mut h = ev.h.clone();
    for row in h.chunks_exact_mut(l) {
        for i in 0..d1 {
            row[i] += theta1_canon[i];
        }
    }

    let mut upsilon = DMatrix::zeros(d1, l);
    for i in 0..d1 {
        upsilon[(i, i)] = 1.0;
    }
    let mut sigma1 = DMatrix::zeros(l, l);
    for row in h.chunks_exact(l) {
        let ht = DVector::from_column_slice(row);
        sigma1 += &ht * ht.transpose();
    }
    sigma1 /= n as f64;

    let (u2, omega1, omega2, sigma2, dm1_mean, omega2_inv) = if d2 > 0 {
        let parts = sandwich_from(&ev, &h, dist);
        let ubar = mean_matrix(&parts.u_hat);
        let mut omega1 = DMatrix::zeros(l, d2);
        for t in 0..n {
            let ht = DVector::from_column_slice(&h[t * l..(t + 1) * l]);
            omega1 += &ht * ht.transpose() * (&parts.u_hat[t] - &ubar);
        }
        omega1 /= n as f64;
        let jbar = DMatrix::from_row_slice(l, d2, &column_means(&ev.jac, n, l * d2));
        let dm1 = jbar.rows(0, d1).into_owned();
        let oinv = guarded_inverse(&parts.omega, "Omega_2")?;
        (parts.u_hat, omega1, parts.omega, parts.sigma, dm1, oinv)
    } else {
        (
            vec![DMatrix::zeros(l, 0); n],
            DMatrix::zeros(l, 0),
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, 0),
            DMatrix::zeros(d1, 0),
            DMatrix::zeros(0, 0),
        )
    };

    let ubar = if d2 > 0 {
        mean_matrix(&u2)
    } else {
        DMatrix::zeros(l, 0)
    };
    let mut j_t = Vec::with_capacity(n);
    let mut v = DMatrix::zeros(d, d);
    for t in 0..n {
        let centered_u = (&u2[t] - &ubar).transpose(); // d2 x l
        let lower = -(&omega2_inv * &centered_u);
        let upper = &dm1_mean * &omega2_inv * &centered_u - &upsilon;
        let mut jt = DMatrix::zeros(d, l);
        jt.rows_mut(0, d1).copy_from(&upper);
        jt.rows_mut(d1, d2).copy_from(&lower);
        let ht = DVector::from_column_slice(&h[t * l..(t + 1) * l]);
        let g = &jt * ht;
        v += &g * g.transpose();
        j_t.push(jt);
    }
    v /= n as f64;

    let v2 = &omega2_inv * &sigma2 * &omega2_inv;
    let v1 = &dm1_mean * &v2 * dm1_mean.transpose()
        - &upsilon * &omega1 * &omega2_inv * dm1_mean.transpose()
        - &dm1_mean * &omega2_inv * omega1.transpose() * upsilon.transpose()
        + &upsilon * &sigma1 * upsilon.transpose();

    // back to the model's sign convention
    let mut flip = DMatrix::identity(d, d);
    for i in 0..d1 {
        flip[(i, i)] = map.sign;
    }
    let v_joint = &flip * &v * &flip;
    let v1_closed = &v1 * (map.sign * map.sign);
    let theta1_hat = theta1_canon.iter().map(|c| map.sign * c).collect();

    Ok(TwoStepCovariance {
        cov: Covariance::from_asymptotic(v_joint.clone(), n),
        theta1_hat,
        v1_closed,
        v2_closed: v2,
        v_joint,
        parts: TwoStepParts {
            u2_hat: u2,
            omega1,
            sigma1,
            omega2,
            sigma2,
            dm1_mean,
            j_t,
            upsilon,
        },
    })
}

#[derive(Clone, Debug)]
pub struct DlParts {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
}

/// Sample-analog sandwich for the DL estimator:
///
/// ```text
/// H_j = (1/n) sum_t dh_t 1{X_t <= X_j}
/// v_t = (1/n) sum_j H_j 1{X_t <= X_j}
/// A   = (1/n) sum_j H_j' H_j
/// B   = (1/n) sum_t v_t' h_t h_t' v_t
/// ```
///
/// with covariance `A^{-1} B A^{-1} / n`.
pub fn vcov_dl(model: &dyn ResidualModel, sample: &Sample, theta_hat: &[f64]) -> Result<(Covariance, DlParts)> {
    let state = DlObjectiveState::from_sample(sample);
    vcov_dl_with(model, sample, &state, theta_hat)
}

pub fn vcov_dl_with(
    model: &dyn ResidualModel,
    sample: &Sample,
    state: &DlObjectiveState,
    theta_hat: &[f64],
) -> Result<(Covariance, DlParts)> {
    let ev = evaluate(model, sample, theta_hat, true)?;
    let (n, l, d) = (ev.n, ev.l, ev.d);
    let w = l * d;
    let big_h = state.project(&ev.jac, w);
    let mut v = state.back_project(&big_h, w);
    v.iter_mut().for_each(|x| *x /= n as f64);

    let mut a = DMatrix::zeros(d, d);
    for hj in big_h.chunks_exact(w) {
        let hj = DMatrix::from_row_slice(l, d, hj);
        a += hj.transpose() * &hj;
    }
    a /= n as f64;
    let mut b = DMatrix::zeros(d, d);
    for t in 0..n {
        let vt = DMatrix::from_row_slice(l, d, &v[t * w..(t + 1) * w]);
        let s = vt.transpose() * DVector::from_column_slice(ev.h_row(t));
        b += &s * s.transpose();
    }
    b /= n as f64;
    symmetrize(&mut a);
    symmetrize(&mut b);
    let ainv = guarded_inverse(&a, "A (DL curvature)")?;
    let cov = &ainv * &b * &ainv;
    Ok((Covariance::from_asymptotic(cov, n), DlParts { a_hat: a, b_hat: b }))
}
