//! Symmetric coordinate descent for the ℓ1-penalized block quadratic.
//!
//! The penalty is `λ Σ_{j≠k} |κ_jk| + λ_η Σ_j |η_j|` with the diagonal of `K`
//! unpenalized, so a tied pair `κ_jk = κ_kj` carries `2λ`. Each pair update
//! minimizes the objective exactly along that pair:
//!
//! ```text
//! a = B_j[k,k] + B_k[j,j],  G = r_j[k] + r_k[j],  κ ← S(aκ − G, 2λ) / a
//! ```
//!
//! where `r_j = B_j ξ_j − l_j` is block `j`'s gradient and `S` soft
//! thresholding. Sweeps visit the upper triangle column by column, then the
//! diagonal, then `η`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{select, BlockQuadratic, FitResult, FitResultJson, Variable};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Factor applied to every block diagonal before solving.
    pub diag_multiplier: f64,
    /// `λ / λ_η`; infinite leaves `η` unpenalized.
    pub ratio: f64,
    /// KKT residual at which a fit counts as converged.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Strong-rule screening (always followed by a full KKT check).
    pub screening: bool,
    /// Record the objective after every sweep.
    pub track_objective: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            diag_multiplier: 1.01,
            ratio: f64::INFINITY,
            tol: 1e-9,
            max_sweeps: 10_000,
            screening: true,
            track_objective: false,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0) {
            return Err(Error::Domain(format!("ratio λ_K/λ_η must be > 0 (or Inf), got {}", self.ratio)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be > 0, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Domain("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }

    fn eta_penalty(&self, lambda: f64) -> f64 {
        if self.ratio.is_infinite() {
            0.0
        } else {
            lambda / self.ratio
        }
    }
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

struct State<'a> {
    q: &'a BlockQuadratic,
    k: DMatrix<f64>,
    eta: DVector<f64>,
    grad: Vec<DVector<f64>>,
    lambda: f64,
    lambda_eta: f64,
}

impl<'a> State<'a> {
    fn new(q: &'a BlockQuadratic, lambda: f64, lambda_eta: f64, start: Option<&FitResult>) -> Self {
        let m = q.m;
        let (k, eta) = match start {
            Some(f) => (f.k.clone(), f.eta.clone().unwrap_or_else(|| DVector::zeros(m))),
            None => (DMatrix::zeros(m, m), DVector::zeros(m)),
        };
        let mut s = State { q, k, eta, grad: Vec::new(), lambda, lambda_eta };
        s.refresh();
        s
    }

    fn refresh(&mut self) {
        let q = self.q;
        self.grad = (0..q.m)
            .map(|j| &q.blocks[j] * q.row_param(&self.k, Some(&self.eta), j) - &q.linear[j])
            .collect();
    }

    fn shift(&mut self, j: usize, pos: usize, delta: f64) {
        self.grad[j].axpy(delta, &self.q.blocks[j].column(pos), 1.0);
    }

    fn update_pair(&mut self, j: usize, k: usize) -> f64 {
        let q = self.q;
        let a = q.blocks[j][(k, k)] + q.blocks[k][(j, j)];
        if !(a > 0.0) {
            return 0.0;
        }
        let v0 = self.k[(j, k)];
        let g = self.grad[j][k] + self.grad[k][j];
        let v = soft(a * v0 - g, 2.0 * self.lambda) / a;
        let delta = v - v0;
        if delta != 0.0 {
            self.k[(j, k)] = v;
            self.k[(k, j)] = v;
            self.shift(j, k, delta);
            self.shift(k, j, delta);
        }
        delta.abs()
    }

    fn update_diag(&mut self, j: usize) -> f64 {
        let a = self.q.blocks[j][(j, j)];
        if !(a > 0.0) {
            return 0.0;
        }
        let delta = -self.grad[j][j] / a;
        if delta != 0.0 {
            self.k[(j, j)] += delta;
            self.shift(j, j, delta);
        }
        delta.abs()
    }

    fn update_eta(&mut self, j: usize) -> f64 {
        let m = self.q.m;
        let a = self.q.blocks[j][(m, m)];
        if !(a > 0.0) {
            return 0.0;
        }
        let v0 = self.eta[j];
        let v = soft(a * v0 - self.grad[j][m], self.lambda_eta) / a;
        let delta = v - v0;
        if delta != 0.0 {
            self.eta[j] = v;
            self.shift(j, m, delta);
        }
        delta.abs()
    }

    fn sweep(&mut self, pairs: &[(usize, usize)]) -> f64 {
        let mut change = 0.0f64;
        for &(j, k) in pairs {
            change = change.max(self.update_pair(j, k));
        }
        for j in 0..self.q.m {
            change = change.max(self.update_diag(j));
        }
        if !self.q.centered {
            for j in 0..self.q.m {
                change = change.max(self.update_eta(j));
            }
        }
        change
    }

    /// Per-entry KKT violation of pair `(j, k)` (half the pair gradient).
    fn pair_kkt(&self, j: usize, k: usize) -> f64 {
        let g = 0.5 * (self.grad[j][k] + self.grad[k][j]);
        let v = self.k[(j, k)];
        if v != 0.0 {
            (g + self.lambda * v.signum()).abs()
        } else {
            (g.abs() - self.lambda).max(0.0)
        }
    }

    fn kkt(&self, pairs: &[(usize, usize)]) -> f64 {
        let m = self.q.m;
        let mut worst = pairs.iter().map(|&(j, k)| self.pair_kkt(j, k)).fold(0.0f64, f64::max);
        for j in 0..m {
            worst = worst.max(self.grad[j][j].abs());
            if !self.q.centered {
                let g = self.grad[j][m];
                let v = self.eta[j];
                let r = if v != 0.0 {
                    (g + self.lambda_eta * v.signum()).abs()
                } else {
                    (g.abs() - self.lambda_eta).max(0.0)
                };
                worst = worst.max(r);
            }
        }
        worst
    }

    /// Replaces the converged iterate by the exact minimizer on its active
    /// set with signs held fixed, when that solution keeps the signs and
    /// does not worsen the KKT residual. Clears the last digits of error
    /// that coordinate descent leaves behind.
    fn polish(&mut self, cand: &[(usize, usize)]) {
        let m = self.q.m;
        let mut vars: Vec<Variable> = cand
            .iter()
            .filter(|&&(j, k)| self.k[(j, k)] != 0.0)
            .map(|&(j, k)| Variable::Pair(j, k))
            .collect();
        vars.extend((0..m).map(Variable::Diag));
        if !self.q.centered {
            vars.extend((0..m).filter(|&j| self.lambda_eta == 0.0 || self.eta[j] != 0.0).map(Variable::Eta));
        }
        if vars.len() > select::MAX_REFIT_VARIABLES {
            return;
        }
        let (h, mut c) = select::reduced_system(self.q, &vars);
        let old: Vec<f64> = vars.iter().map(|v| self.value(*v)).collect();
        for (a, v) in vars.iter().enumerate() {
            match v {
                Variable::Pair(..) => c[a] -= 2.0 * self.lambda * old[a].signum(),
                Variable::Eta(_) if self.lambda_eta > 0.0 => c[a] -= self.lambda_eta * old[a].signum(),
                _ => {}
            }
        }
        let Ok(x) = linalg::solve_spd(&h, &c, "") else { return };
        let keeps_signs = vars.iter().enumerate().all(|(a, v)| match v {
            Variable::Diag(_) => true,
            Variable::Eta(_) if self.lambda_eta == 0.0 => true,
            _ => x[a] != 0.0 && x[a].signum() == old[a].signum(),
        });
        if !keeps_signs {
            return;
        }
        let before = self.kkt(cand);
        for (a, v) in vars.iter().enumerate() {
            self.set_value(*v, x[a]);
        }
        self.refresh();
        if self.kkt(cand) > before {
            for (a, v) in vars.iter().enumerate() {
                self.set_value(*v, old[a]);
            }
            self.refresh();
        }
    }

    fn value(&self, v: Variable) -> f64 {
        match v {
            Variable::Diag(j) => self.k[(j, j)],
            Variable::Pair(j, k) => self.k[(j, k)],
            Variable::Eta(j) => self.eta[j],
        }
    }

    fn set_value(&mut self, v: Variable, x: f64) {
        match v {
            Variable::Diag(j) => self.k[(j, j)] = x,
            Variable::Pair(j, k) => {
                self.k[(j, k)] = x;
                self.k[(k, j)] = x;
            }
            Variable::Eta(j) => self.eta[j] = x,
        }
    }

    fn objective(&self) -> f64 {
        let eta = Some(&self.eta);
        let mut obj = self.q.loss(&self.k, eta);
        let m = self.q.m;
        for j in 0..m {
            for i in 0..m {
                if i != j {
                    obj += self.lambda * self.k[(i, j)].abs();
                }
            }
        }
        if !self.q.centered {
            obj += self.lambda_eta * self.eta.iter().map(|v| v.abs()).sum::<f64>();
        }
        obj
    }

    fn result(&self, sweeps: usize, kkt: f64, trace: Vec<f64>) -> FitResult {
        FitResult {
            k: self.k.clone(),
            eta: if self.q.centered { None } else { Some(self.eta.clone()) },
            lambda: self.lambda,
            lambda_eta: if self.q.centered { None } else { Some(self.lambda_eta) },
            support: FitResult::support_of(&self.k),
            objective: self.objective(),
            kkt_residual: kkt,
            sweeps,
            trace,
        }
    }
}

fn all_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|k| (0..k).map(move |j| (j, k))).collect()
}

/// Runs coordinate descent over the candidate pairs, then widens the set
/// with any pair outside it that violates the KKT conditions.
fn solve(
    q: &BlockQuadratic,
    lambda: f64,
    opts: &FitOptions,
    start: Option<&FitResult>,
    mut cand: Vec<(usize, usize)>,
) -> Result<FitResult> {
    let m = q.m;
    let mut st = State::new(q, lambda, opts.eta_penalty(lambda), start);
    let mut in_cand = vec![false; m * m];
    for &(j, k) in &cand {
        in_cand[j * m + k] = true;
    }
    // pairs that are already nonzero are always candidates
    for (j, k) in all_pairs(m) {
        if st.k[(j, k)] != 0.0 && !in_cand[j * m + k] {
            in_cand[j * m + k] = true;
            cand.push((j, k));
        }
    }
    cand.sort_by_key(|&(j, k)| (k, j));
    let mut sweeps = 0;
    let mut trace = Vec::new();
    let scale = q.blocks.iter().map(|b| b.amax()).fold(1.0, f64::max);
    loop {
        // full sweeps over the candidates, with inner passes over the active set
        loop {
            let change = st.sweep(&cand);
            sweeps += 1;
            if opts.track_objective {
                trace.push(st.objective());
            }
            if st.kkt(&cand) <= opts.tol {
                st.refresh();
                if st.kkt(&cand) <= opts.tol {
                    st.polish(&cand);
                    break;
                }
            }
            let active: Vec<(usize, usize)> = cand.iter().copied().filter(|&(j, k)| st.k[(j, k)] != 0.0).collect();
            if change > 0.0 {
                loop {
                    if sweeps >= opts.max_sweeps {
                        break;
                    }
                    let change = st.sweep(&active);
                    sweeps += 1;
                    if opts.track_objective {
                        trace.push(st.objective());
                    }
                    if change <= 1e-15 * scale || st.kkt(&active) <= 0.1 * opts.tol {
                        break;
                    }
                }
            }
            if sweeps >= opts.max_sweeps {
                st.refresh();
                let kkt = st.kkt(&all_pairs(m));
                return Err(Error::NonConvergence {
                    sweeps,
                    kkt_residual: kkt,
                    last_iterate: Box::new(st.result(sweeps, kkt, trace)),
                });
            }
        }
        let violators: Vec<(usize, usize)> = all_pairs(m)
            .into_iter()
            .filter(|&(j, k)| !in_cand[j * m + k] && st.pair_kkt(j, k) > opts.tol)
            .collect();
        if violators.is_empty() {
            break;
        }
        for (j, k) in violators {
            in_cand[j * m + k] = true;
            cand.push((j, k));
        }
        cand.sort_by_key(|&(j, k)| (k, j));
    }
    let kkt = st.kkt(&all_pairs(m));
    Ok(st.result(sweeps, kkt, trace))
}

/// Half pair-gradients `|G_jk| / 2` of a fit, indexed like [`all_pairs`].
fn half_gradients(q: &BlockQuadratic, fit: &FitResult) -> Vec<f64> {
    let st = State::new(q, fit.lambda, fit.lambda_eta.unwrap_or(0.0), Some(fit));
    all_pairs(q.m).into_iter().map(|(j, k)| 0.5 * (st.grad[j][k] + st.grad[k][j]).abs()).collect()
}

/// Exact minimizer with every off-diagonal entry fixed at zero: each block
/// reduces to `κ_jj` alone, or the pair `(κ_jj, η_j)` with `η_j`
/// soft-thresholded at `λ_η`.
fn diagonal_fit(q: &BlockQuadratic, lambda: f64, opts: &FitOptions) -> FitResult {
    let m = q.m;
    let lambda_eta = opts.eta_penalty(lambda);
    let mut k = DMatrix::zeros(m, m);
    let mut eta = DVector::zeros(m);
    for j in 0..m {
        let (b, l) = (&q.blocks[j], &q.linear[j]);
        let a = b[(j, j)];
        if !(a > 0.0) {
            continue;
        }
        if q.centered {
            k[(j, j)] = l[j] / a;
            continue;
        }
        let (off, c) = (b[(j, m)], b[(m, m)]);
        let kappa0 = l[j] / a;
        let grad_eta = off * kappa0 - l[m];
        if grad_eta.abs() <= lambda_eta || !(c > 0.0) {
            k[(j, j)] = kappa0;
            continue;
        }
        let target = l[m] + lambda_eta * grad_eta.signum();
        let det = a * c - off * off;
        if !(det > 0.0) {
            k[(j, j)] = kappa0;
            continue;
        }
        k[(j, j)] = (c * l[j] - off * target) / det;
        eta[j] = (a * target - off * l[j]) / det;
    }
    let st = State { q, k, eta, grad: Vec::new(), lambda, lambda_eta };
    st.result(0, 0.0, Vec::new())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Smallest `λ` at which every off-diagonal entry is zero.
///
/// With a finite ratio the `η` penalty moves with `λ`, so the value is found
/// by fixed-point iteration on `λ ↦ max |G_jk|/2` at the diagonal fit.
pub fn lambda_max(q: &BlockQuadratic, opts: &FitOptions) -> Result<f64> {
    opts.validate()?;
    let qm = q.with_diag_multiplier(opts.diag_multiplier)?;
    let at = |lambda: f64| {
        let fit = diagonal_fit(&qm, lambda, opts);
        half_gradients(&qm, &fit).into_iter().fold(0.0, f64::max)
    };
    let mut lambda = at(0.0);
    if !(q.centered || opts.ratio.is_infinite()) {
        for _ in 0..200 {
            let next = at(lambda);
            let done = (next - lambda).abs() <= 1e-13 * lambda.max(1e-300);
            lambda = next.max(if done { lambda } else { 0.0 });
            if done {
                break;
            }
        }
    }
    // margin against rounding in the tie |G_jk| = 2λ
    Ok(lambda * (1.0 + 1e-10))
}

/// `count` log-spaced values from `lambda_max` down to `0.01 · lambda_max`.
pub fn lambda_grid(lambda_max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => (0..count)
            .map(|i| lambda_max * 0.01f64.powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// ℓ1-penalized fit at one `λ` (`η` penalized by `λ / ratio`).
pub fn fit_regularized(q: &BlockQuadratic, lambda: f64, opts: &FitOptions) -> Result<FitResult> {
    check_lambda(lambda)?;
    opts.validate()?;
    let qm = q.with_diag_multiplier(opts.diag_multiplier)?;
    fit_prepared(&qm, lambda, opts, None, None)
}

/// Fit on an already multiplied quadratic. `prev` is the previous path
/// point (fit and its `λ`) for warm starts and the sequential strong rule.
fn fit_prepared(
    qm: &BlockQuadratic,
    lambda: f64,
    opts: &FitOptions,
    warm: Option<&FitResult>,
    prev: Option<(&FitResult, f64)>,
) -> Result<FitResult> {
    let m = qm.m;
    let cand = if !opts.screening {
        all_pairs(m)
    } else {
        let (grads, lambda_prev) = match prev {
            Some((fit, l)) => (half_gradients(qm, fit), l),
            None => {
                let diag = diagonal_fit(qm, lambda, opts);
                let grads = half_gradients(qm, &diag);
                let lmax = grads.iter().copied().fold(0.0, f64::max);
                (grads, lmax.max(lambda))
            }
        };
        let threshold = 2.0 * lambda - lambda_prev;
        all_pairs(m).into_iter().zip(grads).filter(|&(_, g)| g >= threshold).map(|(p, _)| p).collect()
    };
    solve(qm, lambda, opts, warm, cand)
}

/// A regularization path with per-`λ` eBIC scores.
#[derive(Clone, Debug)]
pub struct PathResult {
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitResult>,
    /// eBIC of the penalized estimate.
    pub ebic_raw: Vec<f64>,
    /// eBIC after refitting on the support; `None` when the refit failed.
    pub ebic_refit: Vec<Option<f64>>,
    pub refits: Vec<Option<FitResult>>,
}

#[derive(Serialize)]
struct PathEntryJson {
    lambda: f64,
    df: usize,
    ebic_raw: f64,
    ebic_refit: Option<f64>,
    fit: FitResultJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    refit: Option<FitResultJson>,
}

impl PathResult {
    pub fn to_json(&self) -> String {
        let entries: Vec<PathEntryJson> = (0..self.lambdas.len())
            .map(|i| PathEntryJson {
                lambda: self.lambdas[i],
                df: self.fits[i].support.len(),
                ebic_raw: self.ebic_raw[i],
                ebic_refit: self.ebic_refit[i],
                fit: FitResultJson::from(&self.fits[i]),
                refit: self.refits[i].as_ref().map(FitResultJson::from),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("plain data serializes")
    }

    /// CSV summary `lambda,df,ebic_raw,ebic_refit` (empty refit cell on failure).
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("lambda,df,ebic_raw,ebic_refit\n");
        for i in 0..self.lambdas.len() {
            let refit = self.ebic_refit[i].map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", self.lambdas[i], self.fits[i].support.len(), self.ebic_raw[i], refit));
        }
        out
    }
}

/// Fits every `λ` of a strictly decreasing grid with warm starts. With
/// `grid = None`, `count` log-spaced values from [`lambda_max`] are used.
/// `q` is the raw (unmultiplied) quadratic; eBIC is scored against it.
pub fn solution_path(q: &BlockQuadratic, grid: Option<&[f64]>, count: usize, opts: &FitOptions) -> Result<PathResult> {
    opts.validate()?;
    let lambdas = match grid {
        Some(g) => {
            if g.is_empty() {
                return Err(Error::Domain("lambda grid is empty".into()));
            }
            for &l in g {
                check_lambda(l)?;
            }
            if g.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Domain("lambda grid must be strictly decreasing".into()));
            }
            g.to_vec()
        }
        None => {
            if count == 0 {
                return Err(Error::Domain("lambda count must be at least 1".into()));
            }
            lambda_grid(lambda_max(q, opts)?, count)
        }
    };
    let qm = q.with_diag_multiplier(opts.diag_multiplier)?;
    let mut fits: Vec<FitResult> = Vec::with_capacity(lambdas.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        let prev = if i > 0 { Some((&fits[i - 1], lambdas[i - 1])) } else { None };
        let fit = fit_prepared(&qm, lambda, opts, prev.map(|p| p.0), prev)?;
        fits.push(fit);
    }
    let mut ebic_raw = Vec::with_capacity(fits.len());
    let mut ebic_refit = Vec::with_capacity(fits.len());
    let mut refits = Vec::with_capacity(fits.len());
    for fit in &fits {
        ebic_raw.push(select::ebic_value(q, fit));
        match select::refit_support(&qm, &fit.support) {
            Ok(Some(r)) => {
                ebic_refit.push(Some(select::ebic_value(q, &r)));
                refits.push(Some(r));
            }
            _ => {
                ebic_refit.push(None);
                refits.push(None);
            }
        }
    }
    Ok(PathResult { lambdas, fits, ebic_raw, ebic_refit, refits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfuncs::{shared, HFunction};
    use crate::tggm::{assemble_centered, assemble_noncentered};
    use crate::truncated_normal::{sample, SamplerOptions, TnParams};

    fn problem(m: usize, n: usize, seed: u64, centered: bool) -> BlockQuadratic {
        let mut k = DMatrix::identity(m, m);
        for j in 0..m - 1 {
            k[(j, j + 1)] = 0.4;
            k[(j + 1, j)] = 0.4;
        }
        let p = if centered {
            TnParams::centered(k).unwrap()
        } else {
            TnParams::with_mu(k, DVector::from_element(m, 0.5)).unwrap()
        };
        let data = sample(&p, n, seed, &SamplerOptions::default()).unwrap().data;
        let h = shared(&"min_pow:1:3".parse::<HFunction>().unwrap(), m);
        if centered {
            assemble_centered(&data, &h).unwrap()
        } else {
            assemble_noncentered(&data, &h).unwrap()
        }
    }

    #[test]
    fn lambda_max_kills_off_diagonals() {
        for centered in [true, false] {
            for ratio in [f64::INFINITY, 2.0] {
                let q = problem(4, 200, 1, centered);
                let opts = FitOptions { ratio, ..Default::default() };
                let lmax = lambda_max(&q, &opts).unwrap();
                let at = fit_regularized(&q, lmax, &opts).unwrap();
                assert!(at.support.is_empty());
                let below = fit_regularized(&q, 0.95 * lmax, &opts).unwrap();
                assert!(!below.support.is_empty());
            }
        }
    }

    #[test]
    fn fit_is_symmetric_and_converged() {
        let q = problem(5, 300, 2, false);
        let opts = FitOptions { ratio: 2.0, ..Default::default() };
        let fit = fit_regularized(&q, 0.02, &opts).unwrap();
        assert_eq!(fit.k, fit.k.transpose());
        assert!(fit.kkt_residual <= opts.tol);
        assert!(fit.lambda_eta == Some(0.01));
    }

    #[test]
    fn objective_never_increases() {
        let q = problem(5, 100, 3, true);
        let opts = FitOptions { track_objective: true, screening: false, ..Default::default() };
        let fit = fit_regularized(&q, 0.01, &opts).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn screening_does_not_change_the_answer() {
        let q = problem(6, 150, 4, true);
        let on = FitOptions::default();
        let off = FitOptions { screening: false, ..Default::default() };
        let a = solution_path(&q, None, 10, &on).unwrap();
        let b = solution_path(&q, None, 10, &off).unwrap();
        for (x, y) in a.fits.iter().zip(&b.fits) {
            assert!((&x.k - &y.k).amax() < 1e-8);
        }
    }

    #[test]
    fn path_starts_empty_and_rejects_bad_grids() {
        let q = problem(4, 100, 5, true);
        let p = solution_path(&q, None, 8, &FitOptions::default()).unwrap();
        assert!(p.fits[0].support.is_empty());
        assert_eq!(p.lambdas.len(), 8);
        assert!((p.lambdas[7] / p.lambdas[0] - 0.01).abs() < 1e-12);
        assert!(solution_path(&q, Some(&[0.1, 0.2]), 0, &FitOptions::default()).is_err());
        assert!(solution_path(&q, Some(&[0.1, 0.1]), 0, &FitOptions::default()).is_err());
    }

    #[test]
    fn warm_and_cold_starts_agree() {
        let q = problem(5, 200, 6, false);
        let opts = FitOptions { ratio: 1.0, ..Default::default() };
        let path = solution_path(&q, None, 12, &opts).unwrap();
        for i in [2, 5, 9, 11] {
            let cold = fit_regularized(&q, path.lambdas[i], &opts).unwrap();
            assert!((&cold.k - &path.fits[i].k).amax() < 1e-8);
            let (a, b) = (cold.eta.unwrap(), path.fits[i].eta.clone().unwrap());
            assert!((a - b).amax() < 1e-8);
        }
    }

    #[test]
    fn nonconvergence_keeps_last_iterate() {
        let q = problem(4, 100, 7, true);
        let opts = FitOptions { max_sweeps: 1, screening: false, ..Default::default() };
        match fit_regularized(&q, 0.0, &opts) {
            Err(Error::NonConvergence { last_iterate, .. }) => assert_eq!(last_iterate.k.nrows(), 4),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn grid_helper() {
        assert_eq!(lambda_grid(2.0, 1), vec![2.0]);
        let g = lambda_grid(1.0, 50);
        assert_eq!(g.len(), 50);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn csv_summary_layout() {
        let q = problem(3, 80, 8, true);
        let p = solution_path(&q, None, 3, &FitOptions::default()).unwrap();
        let csv = p.summary_csv();
        assert!(csv.starts_with("lambda,df,ebic_raw,ebic_refit\n"));
        assert_eq!(csv.lines().count(), 4);
        let json: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 3);
    }
}
