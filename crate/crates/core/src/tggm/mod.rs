//! Truncated Gaussian graphical models.
//!
//! For the truncated normal the score-matching loss over `vec(K)` (and `η`
//! in the non-centered case) has a block-diagonal `Γ`: block `j` only
//! involves row `j` of the parameter, `ξ_j = (κ_j1, …, κ_jm[, η_j])`, and
//! equals `1/n Σ_i h_j(X_ij) w_i w_iᵀ` with `w_i = x_i` (centered) or
//! `w_i = (x_i, −1)` (non-centered). The loss is
//!
//! ```text
//! Σ_j [ ½ ξ_jᵀ B_j ξ_j − l_jᵀ ξ_j ]
//! ```
//!
//! where `l_j[k] = 1/n Σ_i h_j'(X_ij) X_ik + 1{k=j} 1/n Σ_i h_j(X_ij)` and,
//! for the `η` slot, `l_j[m] = −1/n Σ_i h_j'(X_ij)`.
//!
//! `K` is kept exactly symmetric: `κ_jk` and `κ_kj` are one variable that
//! appears in blocks `j` and `k`.
//!
//! ```
//! use hscore::hfuncs::{shared, HFunction};
//! use hscore::tggm::{assemble_centered, fit_regularized, FitOptions};
//! use nalgebra::DMatrix;
//!
//! let data = DMatrix::from_row_slice(3, 2, &[0.5, 1.0, 1.5, 0.2, 0.9, 0.8]);
//! let q = assemble_centered(&data, &shared(&HFunction::power(1.0).unwrap(), 2)).unwrap();
//! let fit = fit_regularized(&q, 0.0, &FitOptions::default()).unwrap();
//! assert_eq!(fit.k[(0, 1)], fit.k[(1, 0)]);
//! ```

mod diagnostics;
mod scaling;
mod select;
mod solver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hfuncs::HFunction;
use crate::{io, par};

pub use diagnostics::{diagnostics, TheoryDiagnostics};
pub use scaling::{column_scales, scale_columns, unscale_fit};
pub use select::{ebic, ebic_value, log_binomial, refit_support, reduced_system, select_index, Variable};
pub use solver::{fit_regularized, lambda_grid, lambda_max, solution_path, FitOptions, PathResult};

/// Block-diagonal representation of the score-matching quadratic.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockQuadratic {
    pub m: usize,
    pub centered: bool,
    pub n: usize,
    /// `m` symmetric `q × q` blocks, `q = m` or `m + 1`.
    pub blocks: Vec<DMatrix<f64>>,
    /// Linear term of each block, in the block's own coordinates.
    pub linear: Vec<DVector<f64>>,
    /// Total factor applied to the block diagonals so far.
    pub diag_multiplier: f64,
}

impl BlockQuadratic {
    /// Block size: `m` centered, `m + 1` with the `η` slot.
    pub fn q(&self) -> usize {
        if self.centered {
            self.m
        } else {
            self.m + 1
        }
    }

    /// The linear term laid out as `vec(u) + vec(diag V)` (column-major over
    /// `m × q`), followed per column by the `η` entry when non-centered.
    ///
    /// Position `j·q + k` (`k < m`) holds `u_kj + 1{k=j} V_j`, the gradient
    /// of `κ_kj` in block `k`. On symmetric `K` this is the same loss as the
    /// per-block layout of [`BlockQuadratic::linear`].
    pub fn g_flat(&self) -> DVector<f64> {
        let (m, q) = (self.m, self.q());
        let mut g = DVector::zeros(m * q);
        for j in 0..m {
            for k in 0..m {
                g[j * q + k] = self.linear[k][j];
            }
            if !self.centered {
                g[j * q + m] = self.linear[j][m];
            }
        }
        g
    }

    /// Copy whose block diagonals carry a total multiplier `c` (relative to
    /// the raw assembly), regardless of what `self` currently carries.
    pub fn with_diag_multiplier(&self, c: f64) -> Result<Self> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(Error::Domain(format!("diagonal multiplier must be >= 1, got {c}")));
        }
        let mut out = self.clone();
        let rel = c / self.diag_multiplier;
        for b in &mut out.blocks {
            for i in 0..b.nrows() {
                b[(i, i)] *= rel;
            }
        }
        out.diag_multiplier = c;
        Ok(out)
    }

    /// Block `j`'s parameter `ξ_j` read from `(K, η)`.
    pub fn row_param(&self, k: &DMatrix<f64>, eta: Option<&DVector<f64>>, j: usize) -> DVector<f64> {
        let mut xi = DVector::zeros(self.q());
        xi.rows_mut(0, self.m).copy_from(&k.row(j).transpose());
        if let (false, Some(eta)) = (self.centered, eta) {
            xi[self.m] = eta[j];
        }
        xi
    }

    /// `(Σ_j ξ_jᵀ B_j ξ_j, Σ_j l_jᵀ ξ_j)` at `(K, η)`.
    pub fn quad_and_linear(&self, k: &DMatrix<f64>, eta: Option<&DVector<f64>>) -> (f64, f64) {
        let (mut quad, mut lin) = (0.0, 0.0);
        for j in 0..self.m {
            let xi = self.row_param(k, eta, j);
            quad += xi.dot(&(&self.blocks[j] * &xi));
            lin += self.linear[j].dot(&xi);
        }
        (quad, lin)
    }

    /// Unpenalized loss `½ vecᵀΓvec − gᵀvec` at `(K, η)`.
    pub fn loss(&self, k: &DMatrix<f64>, eta: Option<&DVector<f64>>) -> f64 {
        let (quad, lin) = self.quad_and_linear(k, eta);
        0.5 * quad - lin
    }
}

fn check(data: &DMatrix<f64>, h: &[HFunction]) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::Domain(format!("data must be non-empty, got {}x{}", data.nrows(), data.ncols())));
    }
    if h.len() != data.ncols() {
        return Err(Error::Domain(format!("{} weight functions given for {} columns", h.len(), data.ncols())));
    }
    io::check_nonnegative(data)
}

fn assemble(data: &DMatrix<f64>, h: &[HFunction], centered: bool) -> Result<BlockQuadratic> {
    check(data, h)?;
    let (n, m) = (data.nrows(), data.ncols());
    let q = if centered { m } else { m + 1 };
    // blocks are independent; each sums over samples in a fixed order
    let per_block = par::chunked(m, |cols| {
        cols.map(|j| {
            let mut b = DMatrix::zeros(q, q);
            let mut l = DVector::zeros(q);
            let mut w = DVector::zeros(q);
            for i in 0..n {
                for k in 0..m {
                    w[k] = data[(i, k)];
                }
                if !centered {
                    w[m] = -1.0;
                }
                let (hv, dh) = h[j].eval_unchecked(data[(i, j)]);
                b.syger(hv, &w, &w, 1.0);
                l.axpy(dh, &w, 1.0);
                l[j] += hv;
            }
            b.fill_upper_triangle_with_lower_triangle();
            (b / n as f64, l / n as f64)
        })
        .collect::<Vec<_>>()
    });
    let (blocks, linear) = per_block.into_iter().flatten().unzip();
    Ok(BlockQuadratic { m, centered, n, blocks, linear, diag_multiplier: 1.0 })
}

/// Blocks for the centered model (`μ = 0`, parameter `K`).
pub fn assemble_centered(data: &DMatrix<f64>, h: &[HFunction]) -> Result<BlockQuadratic> {
    assemble(data, h, true)
}

/// Blocks for the non-centered model (parameters `K` and `η = Kμ`).
pub fn assemble_noncentered(data: &DMatrix<f64>, h: &[HFunction]) -> Result<BlockQuadratic> {
    assemble(data, h, false)
}

/// A fitted precision matrix with its optimality certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub k: DMatrix<f64>,
    pub eta: Option<DVector<f64>>,
    pub lambda: f64,
    /// Penalty on `η`; `0` when `η` is unpenalized, `None` when centered.
    pub lambda_eta: Option<f64>,
    /// Off-diagonal support, pairs `(i, j)` with `i < j`, 0-based.
    pub support: Vec<(usize, usize)>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
    /// Objective after every sweep, when requested.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub(crate) fn support_of(k: &DMatrix<f64>) -> Vec<(usize, usize)> {
        let m = k.nrows();
        let mut s = Vec::new();
        for j in 0..m {
            for i in 0..j {
                if k[(i, j)] != 0.0 {
                    s.push((i, j));
                }
            }
        }
        s.sort_unstable();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FitResultJson::from(self)).expect("plain data serializes")
    }
}

/// JSON layout of a fit. Support pairs are 1-based to match the `x1..xm`
/// column names of the data files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResultJson {
    pub m: usize,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eta: Option<Vec<f64>>,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_eta: Option<f64>,
    pub support: Vec<[usize; 2]>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
}

impl From<&FitResult> for FitResultJson {
    fn from(f: &FitResult) -> Self {
        let m = f.k.nrows();
        FitResultJson {
            m,
            k: (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|ij| f.k[ij]).collect(),
            eta: f.eta.as_ref().map(|e| e.iter().copied().collect()),
            lambda: f.lambda,
            lambda_eta: f.lambda_eta,
            support: f.support.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            objective: f.objective,
            kkt_residual: f.kkt_residual,
            sweeps: f.sweeps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::{self, sym_index, TruncatedGaussianFamily};
    use crate::hfuncs::shared;
    use crate::truncated_normal::stream_rng;
    use rand::Rng;

    fn pow1(m: usize) -> Vec<HFunction> {
        shared(&HFunction::power(1.0).unwrap(), m)
    }

    #[test]
    fn centered_hand_example() {
        let data = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let q = assemble_centered(&data, &pow1(2)).unwrap();
        assert_eq!(q.blocks[0], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert_eq!(q.blocks[1], DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 4.0, 8.0]));
        assert_eq!(q.g_flat().as_slice(), &[2.0, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn noncentered_hand_example() {
        let data = DMatrix::from_row_slice(1, 1, &[2.0]);
        let q = assemble_noncentered(&data, &pow1(1)).unwrap();
        assert_eq!(q.blocks[0], DMatrix::from_row_slice(2, 2, &[8.0, -4.0, -4.0, 2.0]));
        assert_eq!(q.g_flat().as_slice(), &[4.0, -1.0]);
    }

    #[test]
    fn zero_h_gives_zero_quadratic() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 0.1]);
        let q = assemble_centered(&data, &shared(&HFunction::constant(0.0).unwrap(), 2)).unwrap();
        assert!(q.blocks.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(q.g_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eta_slice_reduces_to_centered() {
        let mut rng = stream_rng(3, 0);
        let data = DMatrix::from_fn(30, 3, |_, _| rng.random::<f64>() * 2.0);
        let h = shared(&"min_pow:1:1.5".parse().unwrap(), 3);
        let c = assemble_centered(&data, &h).unwrap();
        let nc = assemble_noncentered(&data, &h).unwrap();
        for j in 0..3 {
            assert_eq!(nc.blocks[j].view((0, 0), (3, 3)), c.blocks[j]);
            assert_eq!(nc.linear[j].rows(0, 3), c.linear[j]);
        }
    }

    #[test]
    fn rejects_negative_data() {
        let data = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        assert!(matches!(assemble_centered(&data, &pow1(2)), Err(Error::Domain(_))));
    }

    /// Folds the blocks onto the packed symmetric parameter, the layout of
    /// the generic exponential-family assembly.
    fn fold(q: &BlockQuadratic) -> (DMatrix<f64>, DVector<f64>) {
        let m = q.m;
        let fam = TruncatedGaussianFamily::new(m, q.centered);
        let r = expfam::ExpFamily::r(&fam);
        let idx = |j: usize, k: usize| if k < m { sym_index(j, k) } else { m * (m + 1) / 2 + j };
        let mut gamma = DMatrix::zeros(r, r);
        let mut g = DVector::zeros(r);
        for j in 0..m {
            for a in 0..q.q() {
                g[idx(j, a)] += q.linear[j][a];
                for b in 0..q.q() {
                    gamma[(idx(j, a), idx(j, b))] += q.blocks[j][(a, b)];
                }
            }
        }
        (gamma, g)
    }

    #[test]
    fn agrees_with_generic_assembly() {
        let mut rng = stream_rng(9, 0);
        for centered in [true, false] {
            let data = DMatrix::from_fn(25, 3, |_, _| rng.random::<f64>() * 3.0);
            let h = shared(&HFunction::log1p(), 3);
            let q = assemble(&data, &h, centered).unwrap();
            let generic = expfam::assemble_quadratic(&TruncatedGaussianFamily::new(3, centered), &data, &h).unwrap();
            let (gamma, g) = fold(&q);
            assert!((gamma - &generic.gamma).amax() < 1e-12);
            assert!((g - &generic.g).amax() < 1e-12);
        }
    }

    #[test]
    fn multiplier_is_absolute() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 0.1]);
        let q = assemble_centered(&data, &pow1(2)).unwrap();
        let a = q.with_diag_multiplier(1.01).unwrap().with_diag_multiplier(1.01).unwrap();
        let b = q.with_diag_multiplier(1.01).unwrap();
        assert!((a.blocks[0].clone() - &b.blocks[0]).amax() < 1e-15);
        assert!(q.with_diag_multiplier(0.5).is_err());
    }
}
