//! Small dense matrix helpers shared by the update and diagnostic code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a matrix counts as singular.
const SINGULAR_TOL: f64 = 1e-14;

/// Inverse of a square matrix, rejecting (numerically) singular input.
pub fn checked_inverse(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.nrows() != w.ncols() {
        return Err(Error::dim(format!("matrix {}×{} is not square", w.nrows(), w.ncols())));
    }
    let (smin, smax) = extreme_singular_values(w);
    if !(smin > SINGULAR_TOL * smax) {
        return Err(Error::arg(format!("matrix is singular (σ_min = {smin:e}, σ_max = {smax:e})")));
    }
    w.clone()
        .try_inverse()
        .ok_or_else(|| Error::arg("matrix is singular"))
}

fn extreme_singular_values(w: &DMatrix<f64>) -> (f64, f64) {
    let sv = w.singular_values();
    let smax = sv.iter().fold(0.0_f64, |m, &s| m.max(s));
    let smin = sv.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    (smin, smax)
}

pub fn spectral_norm(w: &DMatrix<f64>) -> f64 {
    extreme_singular_values(w).1
}

/// `κ₂(W) = σ_max / σ_min`; infinite for singular input.
pub fn condition_number(w: &DMatrix<f64>) -> f64 {
    let (smin, smax) = extreme_singular_values(w);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// `I − r rᵀ / (rᵀ r)`: orthogonal projector onto the complement of `r`.
pub fn complement_projector(r: &DVector<f64>) -> DMatrix<f64> {
    let n = r.len();
    DMatrix::identity(n, n) - r * r.transpose() / r.norm_squared()
}

/// Rank of the matrix whose columns are `vectors`, with a relative cutoff.
pub fn column_rank(vectors: &[DVector<f64>], rel_tol: f64) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let m = DMatrix::from_columns(vectors);
    let sv = m.singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}
