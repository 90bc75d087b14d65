#![allow(dead_code)]

use mddest::builtin::{builtin_model, ModelSpec};
use mddest::model::ResidualModel;
use mddest::rng::{normal, stream_rng};
use mddest::Sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 0)
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Residual rows `h_t` as a `Vec` per row.
pub fn residual_rows(model: &dyn ResidualModel, sample: &Sample, theta: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![0.0; model.output_dim()];
    (0..sample.n())
        .map(|t| {
            model.residual(sample.z_row(t), theta, &mut out);
            out.clone()
        })
        .collect()
}

/// Double-centered form: `(1/n^2) sum_ts A_ts * 0.5 |h_t - h_s|^2` where
/// `A` is the doubly centered distance matrix of `X`.
pub fn brute_mdd(h: &[Vec<f64>], x: &[Vec<f64>]) -> f64 {
    let n = h.len();
    let d: Vec<Vec<f64>> = (0..n).map(|t| (0..n).map(|s| norm(&x[t], &x[s])).collect()).collect();
    let row: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let all = row.iter().sum::<f64>() / n as f64;
    let mut total = 0.0;
    for t in 0..n {
        for s in 0..n {
            let a = d[t][s] - row[t] - row[s] + all;
            let b = 0.5 * norm(&h[t], &h[s]).powi(2);
            total += a * b;
        }
    }
    total / (n * n) as f64
}

/// `(1/n) sum_j |(1/n) sum_t h_t 1{X_t <= X_j}|^2`, componentwise `<=`.
pub fn brute_dl(h: &[Vec<f64>], x: &[Vec<f64>]) -> f64 {
    let n = h.len();
    let l = h[0].len();
    let mut total = 0.0;
    for j in 0..n {
        let mut g = vec![0.0; l];
        for t in 0..n {
            if x[t].iter().zip(&x[j]).all(|(a, b)| a <= b) {
                for i in 0..l {
                    g[i] += h[t][i] / n as f64;
                }
            }
        }
        total += g.iter().map(|v| v * v).sum::<f64>();
    }
    total / n as f64
}

pub fn x_rows(sample: &Sample) -> Vec<Vec<f64>> {
    (0..sample.n()).map(|t| sample.x_row(t).to_vec()).collect()
}

/// Central differences with step `1e-6 * max(1, |theta_j|)`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, theta: &[f64]) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let step = 1e-6 * theta[j].abs().max(1.0);
            let mut up = theta.to_vec();
            up[j] += step;
            let mut down = theta.to_vec();
            down[j] -= step;
            (f(&up) - f(&down)) / (2.0 * step)
        })
        .collect()
}

/// Largest `|a - b| / max(1, |b|)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Models the random instances are drawn from. All are smooth in `theta`.
pub fn model_zoo() -> Vec<ModelSpec> {
    vec![
        ModelSpec::LinearNoIntercept { l: 1, k2: 1 },
        ModelSpec::LinearNoIntercept { l: 2, k2: 2 },
        ModelSpec::LinearWithIntercept { l: 1, k2: 2 },
        ModelSpec::SinIndex,
        ModelSpec::SigmoidIndex,
        ModelSpec::QuadraticIndex,
        ModelSpec::Ar { p: 2, intercept: true },
        ModelSpec::Var {
            dim: 2,
            p: 1,
            intercept: false,
        },
        ModelSpec::Tar {
            p: 1,
            threshold_lag: 1,
            threshold: 0.0,
            intercept: true,
        },
    ]
}

pub struct Instance {
    pub spec: ModelSpec,
    pub model: Box<dyn ResidualModel>,
    pub sample: Sample,
    pub theta: Vec<f64>,
}

/// Random `(model, theta, sample)` with standard normal `Z`, `X` and
/// `theta`; `X` has `q` columns.
pub fn random_instance<R: Rng>(rng: &mut R, spec: ModelSpec, n: usize, q: usize) -> Instance {
    let model = builtin_model(&spec).unwrap();
    let k = model.input_dim();
    let z: Vec<f64> = (0..n * k).map(|_| normal(rng)).collect();
    let x: Vec<f64> = (0..n * q).map(|_| normal(rng)).collect();
    let theta: Vec<f64> = (0..model.param_dim()).map(|_| 0.8 * normal(rng)).collect();
    Instance {
        spec,
        model,
        sample: Sample::new(z, k, x, q).unwrap(),
        theta,
    }
}
