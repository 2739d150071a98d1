//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest condition number accepted by [`solve_spd`].
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(a.clone()).eigenvalues
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).min()
}

/// Max absolute asymmetry `|a_ij - a_ji|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// `ℓ∞ → ℓ∞` operator norm: the largest absolute row sum.
pub fn inf_operator_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves `a x = b` for symmetric positive definite `a`, refusing systems
/// whose spectral condition number exceeds [`MAX_CONDITION`].
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, advice: &str) -> Result<DVector<f64>> {
    let ev = symmetric_eigenvalues(a);
    let (lo, hi) = (ev.min(), ev.amax());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition, advice: advice.to_string() });
    }
    let chol = a.clone().cholesky().ok_or_else(|| Error::IllConditioned {
        condition,
        advice: advice.to_string(),
    })?;
    Ok(chol.solve(b))
}

/// Inverse of a symmetric positive definite matrix, with the same guard as
/// [`solve_spd`].
pub fn inverse_spd(a: &DMatrix<f64>, advice: &str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = DVector::zeros(n);
        e[c] = 1.0;
        inv.set_column(c, &solve_spd(a, &e, advice)?);
    }
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Sub-matrix on the given row and column index sets.
pub fn select(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}
