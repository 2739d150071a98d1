//! Column scaling of the data matrix and the inverse map on estimates.
//!
//! Columns are divided by their root mean square `s_j = ‖x_j‖₂ / √n`, the
//! column ℓ2 norm up to a factor common to every column. Keeping values
//! of order one means a truncation point such as `c = 3` in `min(x, 3)`
//! stays meaningful whatever the sample size.

use nalgebra::{DMatrix, DVector};

use super::FitResult;
use crate::error::{Error, Result};

pub fn column_scales(data: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = data.nrows() as f64;
    let s = DVector::from_iterator(data.ncols(), data.column_iter().map(|c| (c.norm_squared() / n).sqrt()));
    if let Some(j) = s.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Degenerate(format!("column x{} is identically zero and cannot be scaled", j + 1)));
    }
    Ok(s)
}

pub fn scale_columns(data: &DMatrix<f64>, scales: &DVector<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        c /= scales[j];
    }
    out
}

/// Maps a fit on scaled data back to original units:
/// `κ_jk / (s_j s_k)` and `η_j / s_j`. Objective and KKT residual still
/// refer to the scaled problem.
pub fn unscale_fit(fit: &FitResult, scales: &DVector<f64>) -> FitResult {
    let m = fit.k.nrows();
    let mut out = fit.clone();
    out.k = DMatrix::from_fn(m, m, |i, j| fit.k[(i, j)] / (scales[i] * scales[j]));
    out.eta = fit.eta.as_ref().map(|e| e.component_div(scales));
    out
}
