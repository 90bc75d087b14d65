//! Indicator-weighted integrated moment objective of Dominguez and Lobato,
//! weighted by the empirical distribution of `X`:
//!
//! ```text
//! DL_n(theta) = (1/n) sum_j | (1/n) sum_t h_t(theta) 1{X_t <= X_j} |^2
//! ```
//!
//! `<=` is componentwise for vector `X`.

use crate::error::{Error, Result};
use crate::model::{evaluate, Evaluated, ResidualModel};
use crate::sample::Sample;

/// `I[t][j] = 1{X_t <= X_j}` for every pair of rows.
#[derive(Clone, Debug)]
pub struct DlObjectiveState {
    n: usize,
    ind: Vec<bool>,
}

impl DlObjectiveState {
    pub fn from_sample(sample: &Sample) -> Self {
        let n = sample.n();
        let mut ind = vec![false; n * n];
        for t in 0..n {
            let xt = sample.x_row(t);
            for j in 0..n {
                let xj = sample.x_row(j);
                ind[t * n + j] = xt.iter().zip(xj).all(|(a, b)| a <= b);
            }
        }
        Self { n, ind }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, t: usize, j: usize) -> bool {
        self.ind[t * self.n + j]
    }

    fn check(&self, sample: &Sample) -> Result<()> {
        if self.n != sample.n() {
            return Err(Error::Shape(format!(
                "indicator state built for {} rows, sample has {}",
                self.n,
                sample.n()
            )));
        }
        Ok(())
    }

    /// `g_j = (1/n) sum_t v_t 1{X_t <= X_j}` for a row-major `n x width` array.
    pub(crate) fn project(&self, v: &[f64], width: usize) -> Vec<f64> {
        let n = self.n;
        let mut g = vec![0.0; n * width];
        for t in 0..n {
            let vt = &v[t * width..(t + 1) * width];
            let row = &self.ind[t * n..(t + 1) * n];
            for (j, &on) in row.iter().enumerate() {
                if on {
                    for (gj, x) in g[j * width..(j + 1) * width].iter_mut().zip(vt) {
                        *gj += x;
                    }
                }
            }
        }
        g.iter_mut().for_each(|x| *x /= n as f64);
        g
    }

    /// `r_t = sum_j 1{X_t <= X_j} g_j`, the adjoint of [`Self::project`] up to `1/n`.
    pub(crate) fn back_project(&self, g: &[f64], width: usize) -> Vec<f64> {
        let n = self.n;
        let mut r = vec![0.0; n * width];
        for t in 0..n {
            let row = &self.ind[t * n..(t + 1) * n];
            let rt = &mut r[t * width..(t + 1) * width];
            for (j, &on) in row.iter().enumerate() {
                if on {
                    for (x, gj) in rt.iter_mut().zip(&g[j * width..(j + 1) * width]) {
                        *x += gj;
                    }
                }
            }
        }
        r
    }
}

fn value_from(ev: &Evaluated, state: &DlObjectiveState) -> (f64, Vec<f64>) {
    let g = state.project(&ev.h, ev.l);
    let value = g.iter().map(|v| v * v).sum::<f64>() / ev.n as f64;
    (value, g)
}

pub fn dl_objective(
    model: &dyn ResidualModel,
    sample: &Sample,
    state: &DlObjectiveState,
    theta: &[f64],
) -> Result<f64> {
    state.check(sample)?;
    let ev = evaluate(model, sample, theta, false)?;
    Ok(value_from(&ev, state).0)
}

/// Value and gradient `(2/n) sum_j H_j' g_j`, computed as
/// `(2/n^2) sum_t J_t' sum_j 1{X_t <= X_j} g_j`.
pub fn dl_value_and_gradient(
    model: &dyn ResidualModel,
    sample: &Sample,
    state: &DlObjectiveState,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    state.check(sample)?;
    let ev = evaluate(model, sample, theta, true)?;
    let (value, g) = value_from(&ev, state);
    let (n, l, d) = (ev.n, ev.l, ev.d);
    let r = state.back_project(&g, l);
    let mut grad = vec![0.0; d];
    for t in 0..n {
        let jt = ev.jac_row(t);
        let rt = &r[t * l..(t + 1) * l];
        for i in 0..l {
            for j in 0..d {
                grad[j] += jt[i * d + j] * rt[i];
            }
        }
    }
    let scale = 2.0 / (n * n) as f64;
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClosureModel;

    #[test]
    fn diagonal_indicator_is_one() {
        let s = Sample::new(vec![0.0; 4], 1, vec![3.0, 1.0, 1.0, 2.0, 0.0, 5.0, 2.0, 2.0], 2).unwrap();
        let st = DlObjectiveState::from_sample(&s);
        for j in 0..4 {
            assert!(st.get(j, j));
        }
        // (1,1) <= (2,2) holds componentwise, (3,1) <= (1,1) does not
        assert!(st.get(1, 3));
        assert!(!st.get(0, 1));
        // (0,5) vs (2,2): mixed ordering, neither dominates
        assert!(!st.get(2, 3) && !st.get(3, 2));
    }

    #[test]
    fn exact_fit_is_zero() {
        let m = ClosureModel::new(1, 1, 2, |z, t, o| o[0] = z[0] - t[0] * z[1], |z, _t, o| o[0] = -z[1]);
        let z2 = [0.3, -1.0, 2.0, 0.7];
        let z: Vec<f64> = z2.iter().flat_map(|&v| [1.5 * v, v]).collect();
        let s = Sample::new(z, 2, z2.to_vec(), 1).unwrap();
        let st = DlObjectiveState::from_sample(&s);
        assert_eq!(dl_objective(&m, &s, &st, &[1.5]).unwrap(), 0.0);
        let (_, g) = dl_value_and_gradient(&m, &s, &st, &[1.5]).unwrap();
        assert_eq!(g, vec![0.0]);
    }
}
