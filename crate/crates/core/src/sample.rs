//! Aligned observations of model variables `Z_t` and conditioning variables `X_t`.

use std::fmt;

use crate::error::{Error, Result};

/// A time-ordered sample of `n` rows. `z` is `n x k`, `x` is `n x q`, both
/// stored row-major. Construction rejects shape mismatches and non-finite
/// entries, so every `Sample` in circulation is numerically clean.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    n: usize,
    k: usize,
    q: usize,
    z: Vec<f64>,
    x: Vec<f64>,
}

impl Sample {
    pub fn new(z: Vec<f64>, k: usize, x: Vec<f64>, q: usize) -> Result<Self> {
        if k == 0 || q == 0 {
            return Err(Error::Shape(format!(
                "z and x need at least one column (k = {k}, q = {q})"
            )));
        }
        if z.len() % k != 0 {
            return Err(Error::Shape(format!(
                "z has {} entries, not a multiple of k = {k}",
                z.len()
            )));
        }
        if x.len() % q != 0 {
            return Err(Error::Shape(format!(
                "x has {} entries, not a multiple of q = {q}",
                x.len()
            )));
        }
        let n = z.len() / k;
        let nx = x.len() / q;
        if n != nx {
            return Err(Error::Shape(format!("z has {n} rows but x has {nx}")));
        }
        if n < 2 {
            return Err(Error::Shape(format!("need at least 2 rows, got {n}")));
        }
        check_finite("z", &z, k)?;
        check_finite("x", &x, q)?;
        Ok(Self { n, k, q, z, x })
    }

    pub fn from_rows(z: &[Vec<f64>], x: &[Vec<f64>]) -> Result<Self> {
        let k = z.first().map_or(0, Vec::len);
        let q = x.first().map_or(0, Vec::len);
        if let Some(bad) = z.iter().position(|r| r.len() != k) {
            return Err(Error::Shape(format!("z row {bad} has ragged length")));
        }
        if let Some(bad) = x.iter().position(|r| r.len() != q) {
            return Err(Error::Shape(format!("x row {bad} has ragged length")));
        }
        if z.len() != x.len() {
            return Err(Error::Shape(format!(
                "z has {} rows but x has {}",
                z.len(),
                x.len()
            )));
        }
        Self::new(z.concat(), k, x.concat(), q)
    }

    /// Scalar response/regressor sample with `X_t = Z_{2t}`.
    pub fn scalar_regression(z1: &[f64], z2: &[f64]) -> Result<Self> {
        if z1.len() != z2.len() {
            return Err(Error::Shape(format!(
                "z1 has {} rows but z2 has {}",
                z1.len(),
                z2.len()
            )));
        }
        let z = z1.iter().zip(z2).flat_map(|(&a, &b)| [a, b]).collect();
        Self::new(z, 2, z2.to_vec(), 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn z_row(&self, t: usize) -> &[f64] {
        &self.z[t * self.k..(t + 1) * self.k]
    }

    pub fn x_row(&self, t: usize) -> &[f64] {
        &self.x[t * self.q..(t + 1) * self.q]
    }

    pub fn z_data(&self) -> &[f64] {
        &self.z
    }

    pub fn x_data(&self) -> &[f64] {
        &self.x
    }

    pub fn z_column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.z[t * self.k + j]).collect()
    }

    pub fn x_column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.x[t * self.q + j]).collect()
    }

    /// Same `z`, new conditioning matrix.
    pub fn with_conditioning(&self, x: Vec<f64>, q: usize) -> Result<Self> {
        Self::new(self.z.clone(), self.k, x, q)
    }
}

fn check_finite(matrix: &'static str, data: &[f64], cols: usize) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFiniteInput {
            matrix,
            row: i / cols,
            col: i % cols,
        }),
        None => Ok(()),
    }
}

/// Heuristic warnings about a sample. The stationarity and moment
/// assumptions behind the estimator cannot be verified from data; these flag
/// the cases that are known to break the computations.
#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    /// A conditioning column has zero spread, so it contributes nothing to
    /// any pairwise distance.
    DegenerateConditioning { column: usize },
    /// Fewer than `d + 2` observations for `d` parameters.
    TooFewObservations { n: usize, d: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DegenerateConditioning { column } => {
                write!(f, "degenerate conditioning variable (column {column} is constant)")
            }
            Diagnostic::TooFewObservations { n, d } => {
                write!(f, "only {n} observations for {d} parameters (need at least d + 2)")
            }
        }
    }
}

/// Warnings for a sample that is about to be fitted with `d` parameters.
/// Fatal problems (shape mismatch, NaN/Inf) are already rejected by
/// [`Sample::new`].
pub fn validate_sample(sample: &Sample, d: Option<usize>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for j in 0..sample.q() {
        let first = sample.x_row(0)[j];
        if (1..sample.n()).all(|t| sample.x_row(t)[j] == first) {
            out.push(Diagnostic::DegenerateConditioning { column: j });
        }
    }
    if let Some(d) = d {
        if sample.n() < d + 2 {
            out.push(Diagnostic::TooFewObservations { n: sample.n(), d });
        }
    }
    out
}
