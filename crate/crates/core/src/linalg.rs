//! Small dense linear algebra used by the covariance and regression code.
//!
//! Matrices here are at most a handful of rows wide, so everything is plain
//! `nalgebra::DMatrix` with hand-written factorizations where we need to
//! report exactly which pivot failed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots at or below this value are treated as non-positive.
pub const PD_TOLERANCE: f64 = 1e-10;

/// Symmetry tolerance on covariance entries.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Condition number above which a regressor block is considered singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// Fails with the zero-based index of the first pivot that is not strictly
/// positive (above [`PD_TOLERANCE`]).
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    debug_assert_eq!(p, a.ncols());
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= PD_TOLERANCE {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solve `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let p = l.nrows();
    let mut y = DVector::<f64>::zeros(p);
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = DVector::<f64>::zeros(p);
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Spectral condition number of a symmetric matrix, `+inf` when the smallest
/// eigenvalue is not positive.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    match a.nrows() {
        0 => 1.0,
        1 => {
            if a[(0, 0)] > 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        }
        _ => {
            let eig = a.clone().symmetric_eigen();
            let max = eig.eigenvalues.max();
            let min = eig.eigenvalues.min();
            if min > 0.0 {
                max / min
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Solve a symmetric positive-definite system after the condition gate.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let condition = condition_number(a);
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::SingularDesign { condition });
    }
    let l = cholesky(a).map_err(|_| Error::SingularDesign { condition })?;
    Ok(cholesky_solve(&l, b))
}
