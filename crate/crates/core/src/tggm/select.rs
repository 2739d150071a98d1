//! eBIC scoring, support-restricted refits and λ selection.

use nalgebra::{DMatrix, DVector};

use super::{solver::PathResult, BlockQuadratic, FitResult};
use crate::error::{Error, Result};
use crate::linalg;

/// Largest restricted system [`refit_support`] will factor.
pub const MAX_REFIT_VARIABLES: usize = 3000;

/// One free coordinate of a support-restricted problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variable {
    Diag(usize),
    /// Tied pair `κ_jk = κ_kj`, `j < k`.
    Pair(usize, usize),
    Eta(usize),
}

impl Variable {
    /// `(block, position)` slots the variable occupies.
    fn slots(self, m: usize) -> ([(usize, usize); 2], usize) {
        match self {
            Variable::Diag(j) => ([(j, j), (0, 0)], 1),
            Variable::Pair(j, k) => ([(j, k), (k, j)], 2),
            Variable::Eta(j) => ([(j, m), (0, 0)], 1),
        }
    }
}

/// The loss restricted to `vars` as `½ vᵀHv − cᵀv`.
pub fn reduced_system(q: &BlockQuadratic, vars: &[Variable]) -> (DMatrix<f64>, DVector<f64>) {
    let m = q.m;
    let mut per_block: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
    for (a, v) in vars.iter().enumerate() {
        let (slots, count) = v.slots(m);
        for &(block, pos) in &slots[..count] {
            per_block[block].push((a, pos));
        }
    }
    let r = vars.len();
    let mut h = DMatrix::zeros(r, r);
    let mut c = DVector::zeros(r);
    for (j, entries) in per_block.iter().enumerate() {
        for &(a, pa) in entries {
            c[a] += q.linear[j][pa];
            for &(b, pb) in entries {
                h[(a, b)] += q.blocks[j][(pa, pb)];
            }
        }
    }
    (h, c)
}

fn check_support(m: usize, support: &[(usize, usize)]) -> Result<()> {
    for &(i, j) in support {
        if !(i < j && j < m) {
            return Err(Error::Domain(format!("support pair ({i}, {j}) must satisfy i < j < {m}")));
        }
    }
    Ok(())
}

/// Unpenalized minimizer over the diagonal, the given off-diagonal pairs and
/// (non-centered) `η`, everything else fixed at zero. Returns `None` when the
/// restricted system has more than [`MAX_REFIT_VARIABLES`] unknowns.
pub fn refit_support(q: &BlockQuadratic, support: &[(usize, usize)]) -> Result<Option<FitResult>> {
    let m = q.m;
    check_support(m, support)?;
    let mut pairs = support.to_vec();
    pairs.sort_by_key(|&(j, k)| (k, j));
    pairs.dedup();
    let mut vars: Vec<Variable> = pairs.iter().map(|&(j, k)| Variable::Pair(j, k)).collect();
    vars.extend((0..m).map(Variable::Diag));
    if !q.centered {
        vars.extend((0..m).map(Variable::Eta));
    }
    if vars.len() > MAX_REFIT_VARIABLES {
        return Ok(None);
    }
    let (h, c) = reduced_system(q, &vars);
    let v = linalg::solve_spd(&h, &c, "the refit on this support is singular; a larger sample is needed")?;
    let mut k = DMatrix::zeros(m, m);
    let mut eta = DVector::zeros(m);
    for (a, var) in vars.iter().enumerate() {
        match *var {
            Variable::Diag(j) => k[(j, j)] = v[a],
            Variable::Pair(i, j) => {
                k[(i, j)] = v[a];
                k[(j, i)] = v[a];
            }
            Variable::Eta(j) => eta[j] = v[a],
        }
    }
    let residual = (&h * &v - &c).amax();
    let eta = if q.centered { None } else { Some(eta) };
    let objective = q.loss(&k, eta.as_ref());
    Ok(Some(FitResult {
        support: FitResult::support_of(&k),
        k,
        eta,
        lambda: 0.0,
        lambda_eta: if q.centered { None } else { Some(0.0) },
        objective,
        kkt_residual: residual,
        sweeps: 0,
        trace: Vec::new(),
    }))
}

/// `log C(n, k)` as a sum of logs (exact enough for any graph size here).
pub fn log_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// eBIC of `fit` against the raw quadratic `q`:
///
/// ```text
/// n vecᵀΓvec − 2n gᵀvec + |Ŝ| log n + 2 log C(m(m−1)/2, |Ŝ|)
/// ```
///
/// The first two terms are `2n` times the loss, so lower is better.
pub fn ebic_value(q: &BlockQuadratic, fit: &FitResult) -> f64 {
    let n = q.n as f64;
    let (quad, lin) = q.quad_and_linear(&fit.k, fit.eta.as_ref());
    let s = fit.support.len();
    let edges = q.m * (q.m - 1) / 2;
    n * quad - 2.0 * n * lin + s as f64 * n.ln() + 2.0 * log_binomial(edges, s)
}

/// eBIC of `fit`, optionally after refitting on its support. `raw` must be
/// the unmultiplied quadratic; the refit uses `diag_multiplier`.
pub fn ebic(raw: &BlockQuadratic, fit: &FitResult, refit: bool, diag_multiplier: f64) -> Result<f64> {
    if raw.diag_multiplier != 1.0 {
        return Err(Error::Domain("eBIC needs the quadratic without a diagonal multiplier".into()));
    }
    if !refit {
        return Ok(ebic_value(raw, fit));
    }
    let qm = raw.with_diag_multiplier(diag_multiplier)?;
    match refit_support(&qm, &fit.support)? {
        Some(r) => Ok(ebic_value(raw, &r)),
        None => Err(Error::Domain(format!("support too large to refit (> {MAX_REFIT_VARIABLES} unknowns)"))),
    }
}

/// Index of the eBIC-minimizing grid point; ties go to the larger `λ`.
pub fn select_index(path: &PathResult, refit: bool) -> Option<usize> {
    let scores: Vec<Option<f64>> =
        if refit { path.ebic_refit.clone() } else { path.ebic_raw.iter().map(|&v| Some(v)).collect() };
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if let Some(v) = s.filter(|v| v.is_finite()) {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}
