//! Population constants behind the support-recovery guarantee, estimated
//! by Monte Carlo since the population `Γ₀` has no closed form.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{assemble_centered, assemble_noncentered};
use crate::error::{Error, Result};
use crate::hfuncs::HFunction;
use crate::linalg;
use crate::truncated_normal::{sample, SamplerOptions, TnParams};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryDiagnostics {
    /// `1 − max_j ‖Γ₀[Sᶜ,S] Γ₀[S,S]⁻¹‖∞`; non-positive means the
    /// irrepresentability condition fails.
    pub alpha: f64,
    /// `‖Γ₀[S,S]⁻¹‖∞`.
    pub c_gamma0: f64,
    /// `‖K₀‖∞`, the largest absolute row sum.
    pub c_k0: f64,
    /// Largest number of nonzeros in a row of `K₀` (diagonal included).
    pub d_k0: usize,
    /// Off-diagonal support of `K₀`, 0-based `i < j`.
    pub s0: Vec<(usize, usize)>,
    /// `2 max_j (2 √(K₀⁻¹)_jj + √e E X_j)`.
    pub c_x: f64,
    pub mc_n: usize,
    pub seed: u64,
}

/// Estimates the diagnostics with `mc_n` draws from `TN(μ₀, K₀)` (centered
/// when `mu0` is `None`). In the non-centered case `η` counts as part of
/// every row's support.
pub fn diagnostics(k0: &DMatrix<f64>, mu0: Option<&DVector<f64>>, h: &[HFunction], mc_n: usize, seed: u64) -> Result<TheoryDiagnostics> {
    let params = match mu0 {
        None => TnParams::centered(k0.clone())?,
        Some(mu) => TnParams::with_mu(k0.clone(), mu.clone())?,
    };
    let m = params.dim();
    let data = sample(&params, mc_n, seed, &SamplerOptions::default())?.data;
    let q = if mu0.is_none() { assemble_centered(&data, h)? } else { assemble_noncentered(&data, h)? };

    let mut worst_irrep = 0.0f64;
    let mut c_gamma0 = 0.0f64;
    let mut d_k0 = 0;
    for j in 0..m {
        let mut s: Vec<usize> = (0..m).filter(|&k| k0[(j, k)] != 0.0).collect();
        d_k0 = d_k0.max(s.len());
        if !q.centered {
            s.push(m);
        }
        let sc: Vec<usize> = (0..q.q()).filter(|k| !s.contains(k)).collect();
        let b = &q.blocks[j];
        let inv = linalg::inverse_spd(&linalg::select(b, &s, &s), "Γ₀ restricted to the true support is singular")
            .map_err(|e| match e {
                Error::IllConditioned { condition, .. } => Error::IllConditioned {
                    condition,
                    advice: format!("Γ₀ restricted to the support of row {} is singular", j + 1),
                },
                other => other,
            })?;
        c_gamma0 = c_gamma0.max(linalg::inf_operator_norm(&inv));
        if !sc.is_empty() {
            let cross = linalg::select(b, &sc, &s) * &inv;
            worst_irrep = worst_irrep.max(linalg::inf_operator_norm(&cross));
        }
    }

    let cov = linalg::inverse_spd(k0, "K₀ is singular")?;
    let n = data.nrows() as f64;
    let c_x = 2.0
        * (0..m)
            .map(|j| 2.0 * cov[(j, j)].sqrt() + std::f64::consts::E.sqrt() * data.column(j).sum() / n)
            .fold(f64::NEG_INFINITY, f64::max);
    let s0 = (0..m).flat_map(|k| (0..k).map(move |j| (j, k))).filter(|&(j, k)| k0[(j, k)] != 0.0).collect();
    Ok(TheoryDiagnostics {
        alpha: 1.0 - worst_irrep,
        c_gamma0,
        c_k0: linalg::inf_operator_norm(k0),
        d_k0,
        s0,
        c_x,
        mc_n,
        seed,
    })
}
