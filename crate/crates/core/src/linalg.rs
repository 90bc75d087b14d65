use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Condition number above which a matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse through the SVD, refusing matrices whose condition number
/// exceeds [`CONDITION_LIMIT`]. `what` names the matrix in the error.
pub fn guarded_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("{what} is not square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("{what} has non-finite entries")));
    }
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::Singular(format!(
            "near-singular {what} (condition number {cond:.3e}); identification suspect"
        )));
    }
    svd.pseudo_inverse(0.0)
        .map_err(|e| Error::Singular(format!("{what}: {e}")))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_well_conditioned_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let inv = guarded_inverse(&m, "M").unwrap();
        let id = &m * inv;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_refused() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let err = guarded_inverse(&m, "Omega").unwrap_err();
        assert!(err.to_string().contains("near-singular Omega"), "{err}");
        let zero = DMatrix::<f64>::zeros(1, 1);
        assert!(guarded_inverse(&zero, "Omega").is_err());
    }
}
