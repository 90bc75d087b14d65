//! Simulation designs 1-16: twelve univariate and four bivariate conditional
//! mean models with i.i.d., ARCH, GARCH and autocorrelated errors.
//!
//! Every recursion starts from a zero state and runs `burn_in` extra steps
//! that are discarded.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::builtin::{builtin_model, ModelSpec};
use crate::error::{Error, Result};
use crate::model::ResidualModel;
use crate::result::ParamVector;
use crate::rng::{normal, stream_rng, student_t, uniform};
use crate::sample::Sample;

pub const DEFAULT_BURN_IN: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: u8,
    pub n: usize,
    pub seed: u64,
    /// Independent stream under the same seed, one per replication.
    #[serde(default)]
    pub stream: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl DgpSpec {
    pub fn new(id: u8, n: usize, seed: u64) -> Self {
        Self {
            id,
            n,
            seed,
            stream: 0,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.id) {
            return Err(Error::Config(format!("dgp id must be in 1..=16, got {}", self.id)));
        }
        if self.n < 10 {
            return Err(Error::Config(format!("dgp sample size must be at least 10, got {}", self.n)));
        }
        Ok(())
    }
}

/// Which variable the conditioning set `X_t` is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// `X_t = Z_2t`.
    Regressor,
    /// `X_t = Z_1,t-1`.
    LaggedResponse,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub sample: Sample,
    pub truth: ParamVector,
    pub model_spec: ModelSpec,
    pub param_labels: Vec<String>,
    pub conditioning: Conditioning,
    /// Retained innovation draws by name (`eps`, `eta`, `zeta`, `eps1`, ...),
    /// aligned with the sample rows.
    pub innovations: BTreeMap<&'static str, Vec<f64>>,
}

impl Generated {
    pub fn model(&self) -> Result<Box<dyn ResidualModel>> {
        builtin_model(&self.model_spec)
    }

    /// Whether the paired model is estimated by the two-step procedure.
    pub fn has_intercepts(&self) -> bool {
        self.truth.d1.is_some()
    }
}

const A13: [f64; 4] = [1.0, -1.0, 1.0, 2.0];
const A16: [f64; 4] = [0.6, -0.4, 0.8, 0.2];

/// ARCH(1) error `eps_t = sqrt(0.4 + 0.5 eps_{t-1}^2) eta_t`.
struct Arch {
    prev: f64,
}

impl Arch {
    fn step(&mut self, eta: f64) -> f64 {
        let v = 0.4 + 0.5 * self.prev * self.prev;
        self.prev = v.sqrt() * eta;
        self.prev
    }
}

/// Symmetric square root of a 2x2 positive semidefinite matrix.
fn sqrtm2(v11: f64, v12: f64, v22: f64) -> Option<[f64; 3]> {
    let det = v11 * v22 - v12 * v12;
    if !(det >= 0.0) || v11 < 0.0 || v22 < 0.0 {
        return None;
    }
    let s = det.sqrt();
    let t = (v11 + v22 + 2.0 * s).sqrt();
    if t == 0.0 {
        return Some([0.0; 3]);
    }
    Some([(v11 + s) / t, v12 / t, (v22 + s) / t])
}

struct Draws {
    z1: Vec<f64>,
    z2: Vec<f64>,
    innovations: BTreeMap<&'static str, Vec<f64>>,
}

impl Draws {
    fn new() -> Self {
        Self {
            z1: vec![],
            z2: vec![],
            innovations: BTreeMap::new(),
        }
    }

    fn record(&mut self, name: &'static str, v: f64) {
        self.innovations.entry(name).or_default().push(v);
    }
}

/// Scalar regression designs 1-8 and 11-12 on `total` steps.
fn scalar_regression<R: Rng>(id: u8, total: usize, rng: &mut R) -> Draws {
    let mut d = Draws::new();
    let mut z2_prev = 0.0;
    let mut arch = Arch { prev: 0.0 };
    let mut eps_prev = 0.0;
    for _ in 0..total {
        let (z2, eps) = match id {
            1 | 11 => {
                let eps = normal(rng);
                let eta = normal(rng);
                d.record("eta", eta);
                (0.3 * z2_prev + eta, eps)
            }
            2 => {
                let zeta = normal(rng);
                let eta = normal(rng);
                d.record("zeta", zeta);
                (0.3 * z2_prev + zeta, arch.step(eta))
            }
            3 | 5 => (uniform(rng, -1.0, 1.0), normal(rng)),
            4 | 6 => {
                let eta = normal(rng);
                (uniform(rng, -1.0, 1.0), arch.step(eta))
            }
            7 => {
                let eps = normal(rng);
                (normal(rng), eps)
            }
            8 => {
                let eta = normal(rng);
                d.record("eta", eta);
                eps_prev = 0.1 * eps_prev + eta;
                (normal(rng), eps_prev)
            }
            12 => {
                let zeta = normal(rng);
                let eta = normal(rng);
                (zeta, arch.step(eta))
            }
            _ => unreachable!("scalar regression design {id}"),
        };
        z2_prev = z2;
        d.record("eps", eps);
        let mean = match id {
            1 | 2 | 8 => z2,
            3 | 4 => z2.sin(),
            5 | 6 => 1.0 / (1.0 + (-z2).exp()),
            7 => 1.5625 * z2 + 1.25 * z2 * z2,
            11 | 12 => 0.5 + z2,
            _ => unreachable!(),
        };
        d.z1.push(mean + eps);
        d.z2.push(z2);
    }
    d
}

/// AR(1) designs 9-10; `z2` holds the lagged response.
fn scalar_ar<R: Rng>(id: u8, total: usize, rng: &mut R) -> Draws {
    let mut d = Draws::new();
    let mut y = 0.0;
    let mut arch = Arch { prev: 0.0 };
    for _ in 0..total {
        let eps = if id == 9 {
            student_t(rng, 7)
        } else {
            arch.step(normal(rng))
        };
        d.record("eps", eps);
        let lag = y;
        y = 0.5 * lag + eps;
        d.z1.push(y);
        d.z2.push(lag);
    }
    d
}

/// Bivariate designs 13-16; `z1`, `z2` are interleaved pairs.
fn bivariate<R: Rng>(id: u8, total: usize, rng: &mut R) -> Result<Draws> {
    let mut d = Draws::new();
    let a = if id == 16 { A16 } else { A13 };
    let mut z2_prev = [0.0; 2];
    let mut eps_prev = [0.0f64; 2];
    let mut v_prev = [0.0f64; 2];
    let mut y = [0.0; 2];
    for t in 0..total {
        let z2 = if id == 16 {
            y
        } else {
            let zeta = [normal(rng), normal(rng)];
            [0.3 * z2_prev[0] + zeta[0], 0.2 * z2_prev[1] + zeta[1]]
        };
        let eta = [normal(rng), normal(rng)];
        let eps = match id {
            13 | 16 => eta,
            14 => {
                let v11 = 0.1 + 0.8 * v_prev[0] + 0.1 * eps_prev[0] * eps_prev[0];
                let v22 = 0.1 + 0.8 * v_prev[1] + 0.1 * eps_prev[1] * eps_prev[1];
                let v12 = 0.7 * (v11 * v22).sqrt();
                let [s11, s12, s22] = sqrtm2(v11, v12, v22).ok_or_else(|| {
                    Error::InvalidModel(format!("GARCH covariance is not positive semidefinite at step {t}"))
                })?;
                v_prev = [v11, v22];
                [s11 * eta[0] + s12 * eta[1], s12 * eta[0] + s22 * eta[1]]
            }
            15 => [0.2 * eps_prev[0] + eta[0], 0.1 * eps_prev[1] + eta[1]],
            _ => unreachable!("bivariate design {id}"),
        };
        eps_prev = eps;
        d.record("eps1", eps[0]);
        d.record("eps2", eps[1]);
        let z1 = [
            a[0] * z2[0] + a[1] * z2[1] + eps[0],
            a[2] * z2[0] + a[3] * z2[1] + eps[1],
        ];
        z2_prev = z2;
        y = z1;
        d.z1.extend_from_slice(&z1);
        d.z2.extend_from_slice(&z2);
    }
    Ok(d)
}

pub fn generate(spec: &DgpSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, spec.stream);
    let total = spec.n + spec.burn_in;
    let id = spec.id;
    let (draws, width) = match id {
        9 | 10 => (scalar_ar(id, total, &mut rng), 1),
        13..=16 => (bivariate(id, total, &mut rng)?, 2),
        _ => (scalar_regression(id, total, &mut rng), 1),
    };

    let skip = spec.burn_in;
    let z1 = &draws.z1[skip * width..];
    let z2 = &draws.z2[skip * width..];
    let mut z = Vec::with_capacity(spec.n * 2 * width);
    for t in 0..spec.n {
        z.extend_from_slice(&z1[t * width..(t + 1) * width]);
        z.extend_from_slice(&z2[t * width..(t + 1) * width]);
    }
    let sample = Sample::new(z, 2 * width, z2.to_vec(), width)?;
    let innovations = draws
        .innovations
        .into_iter()
        .map(|(k, v)| (k, v[skip..].to_vec()))
        .collect();

    let (model_spec, values, d1, labels): (ModelSpec, Vec<f64>, Option<usize>, Vec<&str>) = match id {
        1 | 2 | 8 | 9 | 10 => (ModelSpec::LinearNoIntercept { l: 1, k2: 1 }, vec![if id >= 9 { 0.5 } else { 1.0 }], None, vec!["theta0"]),
        3 | 4 => (ModelSpec::SinIndex, vec![1.0], None, vec!["theta0"]),
        5 | 6 => (ModelSpec::SigmoidIndex, vec![1.0], None, vec!["theta0"]),
        7 => (ModelSpec::QuadraticIndex, vec![1.25], None, vec!["theta0"]),
        11 | 12 => (
            ModelSpec::LinearWithIntercept { l: 1, k2: 1 },
            vec![0.5, 1.0],
            Some(1),
            vec!["theta10", "theta20"],
        ),
        _ => (
            ModelSpec::LinearNoIntercept { l: 2, k2: 2 },
            if id == 16 { A16.to_vec() } else { A13.to_vec() },
            None,
            vec!["theta11", "theta12", "theta21", "theta22"],
        ),
    };
    Ok(Generated {
        sample,
        truth: ParamVector { values, d1 },
        model_spec,
        param_labels: labels.into_iter().map(String::from).collect(),
        conditioning: if matches!(id, 9 | 10 | 16) {
            Conditioning::LaggedResponse
        } else {
            Conditioning::Regressor
        },
        innovations,
    })
}
