//! Small dense helpers shared by the clearing, regime and substitutes code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SdfeError};

/// Above this 1-norm condition estimate a system is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

fn norm1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Inverse with a condition guard. Empty matrices invert to empty matrices.
pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(SdfeError::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let inv = a.clone().try_inverse().ok_or(SdfeError::SingularSystem { cond: f64::INFINITY })?;
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(SdfeError::SingularSystem { cond });
    }
    Ok(inv)
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(inverse(a)? * b)
}

pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |r, _| v[idx[r]])
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(a).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `a ⪰ b` in the positive semidefinite order, up to `tol` on eigenvalues.
pub fn psd_geq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(&(a - b)) >= -tol
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    a.nrows() == a.ncols() && (a - a.transpose()).amax() <= 1e-12 * (1.0 + a.amax()) && a.clone().cholesky().is_some()
}
