//! Quasi-Newton minimization with a Nelder-Mead fallback and multistart.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective with analytic gradient. Implementations are evaluated from
/// several threads at once during multistart.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerMethod {
    /// BFGS with analytic gradients; falls back to Nelder-Mead when the line
    /// search stalls away from a stationary point.
    BfgsAnalyticGradient,
    /// Nelder-Mead simplex first, then a BFGS polish from the simplex optimum.
    NelderMeadFallback,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: OptimizerMethod,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub multistart: usize,
    pub perturbation_scale: f64,
    /// Optional box `[lo, hi]` per coordinate.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Seed for the multistart perturbations.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: OptimizerMethod::BfgsAnalyticGradient,
            grad_tol: 1e-8,
            max_iter: 500,
            multistart: 5,
            perturbation_scale: 0.5,
            bounds: None,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        if self.multistart < 1 {
            return Err(Error::Config("multistart must be at least 1".into()));
        }
        if let Some(b) = &self.bounds {
            if b.len() != dim {
                return Err(Error::Config(format!(
                    "{} bounds given for {dim} parameters",
                    b.len()
                )));
            }
            if b.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::Config("bounds need lo <= hi".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after every accepted step, starting point first.
    pub trace: Vec<f64>,
    pub start_index: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project(x: &mut [f64], bounds: Option<&[(f64, f64)]>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(b) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Gradient with components that push against an active bound removed.
fn projected_gradient(x: &[f64], g: &[f64], bounds: Option<&[(f64, f64)]>) -> Vec<f64> {
    match bounds {
        None => g.to_vec(),
        Some(b) => x
            .iter()
            .zip(g)
            .zip(b)
            .map(|((&xi, &gi), &(lo, hi))| {
                if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect(),
    }
}

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// BFGS on the inverse Hessian with backtracking Armijo line search.
/// Every accepted step satisfies `f(new) <= f(old)`.
pub fn bfgs(obj: &dyn Objective, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    let d = x0.len();
    let bounds = cfg.bounds.as_deref();
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let (mut f, mut g) = obj.value_and_gradient(&x)?;
    let mut trace = vec![f];
    let mut hinv = identity(d);
    let mut first_step = true;
    let mut iterations = 0;

    loop {
        let pg = projected_gradient(&x, &g, bounds);
        let gnorm = norm(&pg);
        if gnorm < cfg.grad_tol {
            return Ok(OptimizeOutcome {
                x,
                value: f,
                grad_norm: gnorm,
                converged: true,
                iterations,
                trace,
                start_index: 0,
            });
        }
        if iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;

        let mut dir = mat_vec(&hinv, &g);
        dir.iter_mut().for_each(|v| *v = -*v);
        if dot(&dir, &g) >= 0.0 {
            hinv = identity(d);
            dir = g.iter().map(|v| -v).collect();
        }
        if first_step {
            // unit step of length at most 1 before curvature is known
            let len = norm(&dir);
            if len > 1.0 {
                dir.iter_mut().for_each(|v| *v /= len);
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            project(&mut trial, bounds);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            match obj.value(&trial) {
                Ok(ft) if ft.is_finite() => {
                    if ft <= f + ARMIJO_C * decrease {
                        accepted = Some((trial, ft));
                        break;
                    }
                    // near the optimum the Armijo margin drowns in rounding;
                    // accept a non-increasing step that also shrinks the gradient
                    if ft <= f && (f - ft).abs() <= 1e-14 * f.abs().max(1e-300) {
                        let (_, gt) = obj.value_and_gradient(&trial)?;
                        if norm(&projected_gradient(&trial, &gt, bounds)) < gnorm {
                            accepted = Some((trial, ft));
                            break;
                        }
                    }
                }
                _ => {}
            }
            alpha *= SHRINK;
        }

        let Some((x_new, _)) = accepted else {
            break;
        };
        let (f_new, g_new) = obj.value_and_gradient(&x_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) && sy > 0.0 {
            if first_step {
                let scale = sy / dot(&y, &y);
                hinv = identity(d);
                hinv.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        first_step = false;
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
    }

    let grad_norm = norm(&projected_gradient(&x, &g, bounds));
    Ok(OptimizeOutcome {
        x,
        value: f,
        grad_norm,
        converged: grad_norm < cfg.grad_tol,
        iterations,
        trace,
        start_index: 0,
    })
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Nelder-Mead simplex search, returning the best vertex and its value.
pub fn nelder_mead(
    obj: &dyn Objective,
    x0: &[f64],
    bounds: Option<&[(f64, f64)]>,
    max_evals: usize,
) -> Result<(Vec<f64>, f64)> {
    let d = x0.len();
    let eval = |x: &[f64]| -> f64 {
        match obj.value(x) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };
    let mut start = x0.to_vec();
    project(&mut start, bounds);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let f0 = eval(&start);
    simplex.push((start.clone(), f0));
    for i in 0..d {
        let mut v = start.clone();
        v[i] += 0.1 * v[i].abs().max(1.0);
        project(&mut v, bounds);
        let fv = eval(&v);
        simplex.push((v, fv));
    }
    let mut evals = d + 1;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-15 * best.abs().max(1e-300) && spread < 1e-10 {
            break;
        }
        if spread < 1e-13 {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(v, _)| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut p, bounds);
            p
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    for (v, b) in vertex.0.iter_mut().zip(&best) {
                        *v = b + SHRINK * (*v - b);
                    }
                    vertex.1 = eval(&vertex.0);
                }
                evals += d;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    if !f.is_finite() {
        return Err(Error::Config("objective is non-finite on the whole simplex".into()));
    }
    Ok((x, f))
}

/// One start: the configured primary method, plus the other as rescue.
pub fn minimize(obj: &dyn Objective, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    let max_evals = 400 * (x0.len() + 1);
    match cfg.method {
        OptimizerMethod::BfgsAnalyticGradient => {
            let first = bfgs(obj, x0, cfg)?;
            if first.converged {
                return Ok(first);
            }
            let (xn, _) = nelder_mead(obj, &first.x, cfg.bounds.as_deref(), max_evals)?;
            let mut second = bfgs(obj, &xn, cfg)?;
            if second.value > first.value {
                return Ok(first);
            }
            second.iterations += first.iterations;
            let mut trace = first.trace;
            trace.extend(second.trace.into_iter().filter(|v| *v <= first.value));
            second.trace = trace;
            Ok(second)
        }
        OptimizerMethod::NelderMeadFallback => {
            let (xn, _) = nelder_mead(obj, x0, cfg.bounds.as_deref(), max_evals)?;
            bfgs(obj, &xn, cfg)
        }
    }
}

/// Starting points: `x0` first, then `x0 + N(0, scale^2)` perturbations drawn
/// from a stream keyed on `cfg.seed`.
pub fn starting_points(x0: &[f64], cfg: &OptimizerConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.perturbation_scale).expect("finite scale");
    let mut starts = vec![x0.to_vec()];
    for _ in 1..cfg.multistart {
        starts.push(x0.iter().map(|v| v + normal.sample(&mut rng)).collect());
    }
    starts
}

/// Runs every start and keeps the best converged local minimum (lowest
/// objective, lowest start index on ties); if no start converged, the best
/// unconverged one is returned with `converged = false`.
pub fn multistart(obj: &dyn Objective, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    cfg.validate(x0.len())?;
    let starts = starting_points(x0, cfg);
    let runs: Vec<Result<OptimizeOutcome>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            minimize(obj, s, cfg).map(|mut o| {
                o.start_index = i;
                o
            })
        })
        .collect();
    let mut first_err = None;
    let mut ok = Vec::new();
    for r in runs {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let pick = |only_converged: bool| {
        ok.iter()
            .filter(|o| !only_converged || o.converged)
            .min_by(|a, b| a.value.total_cmp(&b.value).then(a.start_index.cmp(&b.start_index)))
            .cloned()
    };
    match pick(true).or_else(|| pick(false)) {
        Some(best) => Ok(best),
        None => Err(first_err.unwrap_or_else(|| Error::Config("no starting points".into()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        }
        fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let g = vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ];
            Ok((self.value(x)?, g))
        }
    }

    struct Quadratic;

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            3
        }
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok((x[0] - 1.0).powi(2) + 4.0 * (x[1] + 2.0).powi(2) + 0.5 * x[2] * x[2] + x[0] * x[2])
        }
        fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let g = vec![2.0 * (x[0] - 1.0) + x[2], 8.0 * (x[1] + 2.0), x[2] + x[0]];
            Ok((self.value(x)?, g))
        }
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let out = bfgs(&Rosenbrock, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(out.converged, "{out:?}");
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn accepted_steps_never_increase_the_objective() {
        let out = bfgs(&Rosenbrock, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn both_methods_reach_the_same_minimum() {
        let mut cfg = OptimizerConfig::default();
        let a = multistart(&Quadratic, &[0.0; 3], &cfg).unwrap();
        cfg.method = OptimizerMethod::NelderMeadFallback;
        let b = multistart(&Quadratic, &[0.0; 3], &cfg).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.value - b.value).abs() < 1e-8);
    }

    #[test]
    fn bounds_are_respected() {
        let cfg = OptimizerConfig {
            bounds: Some(vec![(-5.0, 0.5), (-1.0, 5.0), (-5.0, 5.0)]),
            ..OptimizerConfig::default()
        };
        let out = multistart(&Quadratic, &[0.0; 3], &cfg).unwrap();
        assert!(out.x[0] <= 0.5 && out.x[1] >= -1.0);
        assert!((out.x[1] + 1.0).abs() < 1e-12);
        assert!(out.converged, "{out:?}");
    }

    #[test]
    fn multistart_is_deterministic() {
        let cfg = OptimizerConfig {
            seed: 42,
            ..OptimizerConfig::default()
        };
        let a = multistart(&Rosenbrock, &[0.0, 0.0], &cfg).unwrap();
        let b = multistart(&Rosenbrock, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.start_index, b.start_index);
    }

    #[test]
    fn invalid_config() {
        let cfg = OptimizerConfig {
            multistart: 0,
            ..OptimizerConfig::default()
        };
        assert!(multistart(&Quadratic, &[0.0; 3], &cfg).is_err());
        let cfg = OptimizerConfig {
            grad_tol: 0.0,
            ..OptimizerConfig::default()
        };
        assert!(cfg.validate(3).is_err());
    }
}
