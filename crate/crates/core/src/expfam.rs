//! Generalized h-score matching for exponential families on `[0, ∞)^m`.
//!
//! For `log p_θ(x) = θᵀt(x) − ψ(θ) + b(x)` the sample loss
//!
//! ```text
//! Ĵ(θ) = 1/n Σ_i Σ_j [ h_j' ∂_j log p + h_j (∂_jj log p + ½ (∂_j log p)²) ]
//! ```
//!
//! is a quadratic `½ θᵀΓθ − gᵀθ + const` with
//!
//! ```text
//! Γ = 1/n Σ_i Σ_j h_j ∂_j t ∂_j tᵀ
//! g = −1/n Σ_i Σ_j [ h_j' ∂_j t + h_j ∂_jj t + h_j (∂_j b) ∂_j t ]
//! ```
//!
//! and its minimizer is `Γ⁻¹g`. Only `x`-derivatives of `t` and `b` are
//! needed; `ψ` never appears.
//!
//! ```
//! use hscore::expfam::{assemble_quadratic, closed_form_estimate, TruncatedGaussianFamily};
//! use hscore::hfuncs::HFunction;
//! use nalgebra::DMatrix;
//!
//! let fam = TruncatedGaussianFamily::new(1, true);
//! let data = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
//! let q = assemble_quadratic(&fam, &data, &[HFunction::power(1.0).unwrap()]).unwrap();
//! assert_eq!((q.gamma[(0, 0)], q.g[0]), (4.5, 3.0));
//! let theta = closed_form_estimate(&q).unwrap();
//! assert!((theta[0] - 2.0 / 3.0).abs() < 1e-15);
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hfuncs::HFunction;
use crate::{io, linalg, par};

/// An exponential family described through coordinate derivatives of its
/// sufficient statistic `t` and base measure `b`.
///
/// Implementations must be deterministic and finite on the positive
/// orthant, and the family must satisfy the boundary conditions that make
/// the integration by parts behind the loss valid for the chosen `h`.
pub trait ExpFamily: Sync {
    /// Parameter dimension `r`.
    fn r(&self) -> usize;
    /// Data dimension `m`.
    fn m(&self) -> usize;
    /// Writes `∂_j t(x)` into `out` (length `r`).
    fn t_partial(&self, x: &[f64], j: usize, out: &mut [f64]);
    /// Writes `∂_jj t(x)` into `out` (length `r`).
    fn t_partial2(&self, x: &[f64], j: usize, out: &mut [f64]);
    fn b_partial(&self, x: &[f64], j: usize) -> f64;
    fn b_partial2(&self, x: &[f64], j: usize) -> f64;
}

/// Index of `κ_jk` (`j ≤ k`) in the packed upper triangle, column by column.
pub fn sym_index(j: usize, k: usize) -> usize {
    let (a, b) = if j <= k { (j, k) } else { (k, j) };
    b * (b + 1) / 2 + a
}

/// The truncated Gaussian family with `θ = (upper triangle of K, η)`.
///
/// `log p = −½ xᵀKx + ηᵀx`; the centered variant drops `η`. Each
/// off-diagonal `κ_jk` appears once in `θ`.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedGaussianFamily {
    m: usize,
    centered: bool,
}

impl TruncatedGaussianFamily {
    pub fn new(m: usize, centered: bool) -> Self {
        TruncatedGaussianFamily { m, centered }
    }

    /// Unpacks `θ` into `(K, η)`; `η` is zero for the centered variant.
    pub fn unpack(&self, theta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.m;
        let k = DMatrix::from_fn(m, m, |a, b| theta[sym_index(a, b)]);
        let base = m * (m + 1) / 2;
        let eta = if self.centered { DVector::zeros(m) } else { DVector::from_fn(m, |j, _| theta[base + j]) };
        (k, eta)
    }

    pub fn pack(&self, k: &DMatrix<f64>, eta: Option<&DVector<f64>>) -> DVector<f64> {
        let m = self.m;
        let mut theta = DVector::zeros(self.r());
        for b in 0..m {
            for a in 0..=b {
                theta[sym_index(a, b)] = k[(a, b)];
            }
        }
        if let (false, Some(eta)) = (self.centered, eta) {
            theta.rows_mut(m * (m + 1) / 2, m).copy_from(eta);
        }
        theta
    }
}

impl ExpFamily for TruncatedGaussianFamily {
    fn r(&self) -> usize {
        let base = self.m * (self.m + 1) / 2;
        if self.centered {
            base
        } else {
            base + self.m
        }
    }

    fn m(&self) -> usize {
        self.m
    }

    fn t_partial(&self, x: &[f64], j: usize, out: &mut [f64]) {
        out.fill(0.0);
        for (k, &xk) in x.iter().enumerate() {
            out[sym_index(j, k)] = -xk;
        }
        if !self.centered {
            out[self.m * (self.m + 1) / 2 + j] = 1.0;
        }
    }

    fn t_partial2(&self, _x: &[f64], j: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[sym_index(j, j)] = -1.0;
    }

    fn b_partial(&self, _x: &[f64], _j: usize) -> f64 {
        0.0
    }

    fn b_partial2(&self, _x: &[f64], _j: usize) -> f64 {
        0.0
    }
}

/// Univariate truncated normal with known variance; `θ = μ/σ²`.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedNormalMean {
    pub sigma2: f64,
}

impl ExpFamily for TruncatedNormalMean {
    fn r(&self) -> usize {
        1
    }
    fn m(&self) -> usize {
        1
    }
    fn t_partial(&self, _x: &[f64], _j: usize, out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn t_partial2(&self, _x: &[f64], _j: usize, out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn b_partial(&self, x: &[f64], _j: usize) -> f64 {
        -x[0] / self.sigma2
    }
    fn b_partial2(&self, _x: &[f64], _j: usize) -> f64 {
        -1.0 / self.sigma2
    }
}

/// Univariate truncated normal with known mean; `θ = 1/σ²`.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedNormalPrecision {
    pub mu: f64,
}

impl ExpFamily for TruncatedNormalPrecision {
    fn r(&self) -> usize {
        1
    }
    fn m(&self) -> usize {
        1
    }
    fn t_partial(&self, x: &[f64], _j: usize, out: &mut [f64]) {
        out[0] = -(x[0] - self.mu);
    }
    fn t_partial2(&self, _x: &[f64], _j: usize, out: &mut [f64]) {
        out[0] = -1.0;
    }
    fn b_partial(&self, _x: &[f64], _j: usize) -> f64 {
        0.0
    }
    fn b_partial2(&self, _x: &[f64], _j: usize) -> f64 {
        0.0
    }
}

type VecCallback = Box<dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync>;
type ScalarCallback = Box<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

/// A family given directly by four callbacks.
pub struct CallbackFamily {
    pub r: usize,
    pub m: usize,
    pub t_partial: VecCallback,
    pub t_partial2: VecCallback,
    pub b_partial: ScalarCallback,
    pub b_partial2: ScalarCallback,
}

impl ExpFamily for CallbackFamily {
    fn r(&self) -> usize {
        self.r
    }
    fn m(&self) -> usize {
        self.m
    }
    fn t_partial(&self, x: &[f64], j: usize, out: &mut [f64]) {
        (self.t_partial)(x, j, out)
    }
    fn t_partial2(&self, x: &[f64], j: usize, out: &mut [f64]) {
        (self.t_partial2)(x, j, out)
    }
    fn b_partial(&self, x: &[f64], j: usize) -> f64 {
        (self.b_partial)(x, j)
    }
    fn b_partial2(&self, x: &[f64], j: usize) -> f64 {
        (self.b_partial2)(x, j)
    }
}

/// The quadratic `½ θᵀΓθ − gᵀθ` representing an empirical loss.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticLoss {
    pub r: usize,
    pub n: usize,
    pub gamma: DMatrix<f64>,
    pub g: DVector<f64>,
    pub diag_multiplier: f64,
}

#[derive(Serialize, Deserialize)]
struct QuadraticLossJson {
    r: usize,
    n: usize,
    gamma: Vec<f64>,
    g: Vec<f64>,
    diag_multiplier: f64,
}

impl QuadraticLoss {
    /// `½ θᵀΓθ − gᵀθ`.
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.gamma * theta)) - self.g.dot(theta)
    }

    /// Returns a copy with `Γ`'s diagonal scaled by `c ≥ 1`. Multipliers
    /// compound with any already applied.
    pub fn with_diag_multiplier(&self, c: f64) -> Result<Self> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(Error::Domain(format!("diagonal multiplier must be >= 1, got {c}")));
        }
        let mut out = self.clone();
        for i in 0..self.r {
            out.gamma[(i, i)] *= c;
        }
        out.diag_multiplier *= c;
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let gamma = (0..self.r).flat_map(|i| (0..self.r).map(move |j| (i, j))).map(|ij| self.gamma[ij]).collect();
        let raw = QuadraticLossJson {
            r: self.r,
            n: self.n,
            gamma,
            g: self.g.iter().copied().collect(),
            diag_multiplier: self.diag_multiplier,
        };
        serde_json::to_string_pretty(&raw).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: QuadraticLossJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if raw.gamma.len() != raw.r * raw.r || raw.g.len() != raw.r {
            return Err(Error::Parse(format!("gamma/g sizes do not match r = {}", raw.r)));
        }
        Ok(QuadraticLoss {
            r: raw.r,
            n: raw.n,
            gamma: DMatrix::from_row_slice(raw.r, raw.r, &raw.gamma),
            g: DVector::from_vec(raw.g),
            diag_multiplier: raw.diag_multiplier,
        })
    }
}

fn check_inputs<F: ExpFamily + ?Sized>(fam: &F, data: &DMatrix<f64>, h: &[HFunction]) -> Result<()> {
    let m = fam.m();
    if data.ncols() != m {
        return Err(Error::Domain(format!("data has {} columns, family expects {m}", data.ncols())));
    }
    if h.len() != m {
        return Err(Error::Domain(format!("{} weight functions given for {m} coordinates", h.len())));
    }
    if data.nrows() == 0 {
        return Err(Error::Domain("data has no rows".into()));
    }
    io::check_nonnegative(data)
}

fn nonfinite(i: usize, j: usize, what: &str) -> Error {
    Error::NonFinite { sample: i + 1, coord: j + 1, what: what.to_string() }
}

/// Per-coordinate derivative evaluations at one sample.
struct Partials {
    dt: Vec<f64>,
    ddt: Vec<f64>,
    db: f64,
    ddb: f64,
    h: f64,
    dh: f64,
}

fn partials<F: ExpFamily + ?Sized>(fam: &F, x: &[f64], i: usize, j: usize, h: &HFunction, p: &mut Partials) -> Result<()> {
    fam.t_partial(x, j, &mut p.dt);
    fam.t_partial2(x, j, &mut p.ddt);
    p.db = fam.b_partial(x, j);
    p.ddb = fam.b_partial2(x, j);
    (p.h, p.dh) = h.eval_unchecked(x[j]);
    if p.dt.iter().chain(p.ddt.iter()).any(|v| !v.is_finite()) {
        return Err(nonfinite(i, j, "sufficient-statistic derivative"));
    }
    if !(p.db.is_finite() && p.ddb.is_finite()) {
        return Err(nonfinite(i, j, "base-measure derivative"));
    }
    if !(p.h.is_finite() && p.dh.is_finite()) {
        return Err(nonfinite(i, j, "weight function"));
    }
    Ok(())
}

fn row(data: &DMatrix<f64>, i: usize) -> Vec<f64> {
    data.row(i).iter().copied().collect()
}

/// The sample loss `Ĵ(θ)` evaluated term by term.
pub fn empirical_loss<F: ExpFamily + ?Sized>(fam: &F, theta: &DVector<f64>, data: &DMatrix<f64>, h: &[HFunction]) -> Result<f64> {
    check_inputs(fam, data, h)?;
    if theta.len() != fam.r() {
        return Err(Error::Domain(format!("θ has length {}, expected {}", theta.len(), fam.r())));
    }
    let (n, m, r) = (data.nrows(), fam.m(), fam.r());
    let parts = par::try_chunked(n, |rows| {
        let mut p = Partials { dt: vec![0.0; r], ddt: vec![0.0; r], db: 0.0, ddb: 0.0, h: 0.0, dh: 0.0 };
        let mut s = 0.0;
        for i in rows {
            let x = row(data, i);
            for j in 0..m {
                partials(fam, &x, i, j, &h[j], &mut p)?;
                let d: f64 = theta.iter().zip(&p.dt).map(|(a, b)| a * b).sum::<f64>() + p.db;
                let dd: f64 = theta.iter().zip(&p.ddt).map(|(a, b)| a * b).sum::<f64>() + p.ddb;
                s += p.dh * d + p.h * (dd + 0.5 * d * d);
            }
        }
        Ok(s)
    })?;
    Ok(parts.iter().sum::<f64>() / n as f64)
}

/// Per-sample contribution `(Γ(x_i), g(x_i))`, before averaging.
fn accumulate_sample<F: ExpFamily + ?Sized>(
    fam: &F,
    x: &[f64],
    i: usize,
    h: &[HFunction],
    p: &mut Partials,
    gamma: &mut DMatrix<f64>,
    g: &mut DVector<f64>,
) -> Result<()> {
    let r = fam.r();
    for j in 0..fam.m() {
        partials(fam, x, i, j, &h[j], p)?;
        for a in 0..r {
            let va = p.dt[a];
            if va != 0.0 {
                g[a] -= p.dh * va + p.h * p.db * va;
                for b in 0..r {
                    gamma[(a, b)] += p.h * va * p.dt[b];
                }
            }
            g[a] -= p.h * p.ddt[a];
        }
    }
    Ok(())
}

/// Builds `(Γ, g)` by averaging per-sample contributions.
pub fn assemble_quadratic<F: ExpFamily + ?Sized>(fam: &F, data: &DMatrix<f64>, h: &[HFunction]) -> Result<QuadraticLoss> {
    check_inputs(fam, data, h)?;
    let (n, r) = (data.nrows(), fam.r());
    let parts = par::try_chunked(n, |rows| {
        let mut p = Partials { dt: vec![0.0; r], ddt: vec![0.0; r], db: 0.0, ddb: 0.0, h: 0.0, dh: 0.0 };
        let mut gamma = DMatrix::zeros(r, r);
        let mut g = DVector::zeros(r);
        for i in rows {
            accumulate_sample(fam, &row(data, i), i, h, &mut p, &mut gamma, &mut g)?;
        }
        Ok((gamma, g))
    })?;
    let mut gamma = DMatrix::zeros(r, r);
    let mut g = DVector::zeros(r);
    for (pg, pv) in parts {
        gamma += pg;
        g += pv;
    }
    gamma /= n as f64;
    g /= n as f64;
    Ok(QuadraticLoss { r, n, gamma, g, diag_multiplier: 1.0 })
}

/// `θ̂ = Γ⁻¹g`, refusing singular or badly conditioned `Γ`.
pub fn closed_form_estimate(q: &QuadraticLoss) -> Result<DVector<f64>> {
    let theta = linalg::solve_spd(
        &q.gamma,
        &q.g,
        "Γ is (numerically) singular; collect more samples or apply a diagonal multiplier",
    )?;
    let residual = (&q.gamma * &theta - &q.g).amax();
    let bound = 1e-8 * (1.0 + q.g.amax());
    if !(residual <= bound) {
        return Err(Error::IllConditioned {
            condition: f64::NAN,
            advice: format!("solve residual {residual:.3e} exceeds {bound:.3e}; collect more samples"),
        });
    }
    Ok(theta)
}

/// Plug-in sandwich estimate `Γ⁻¹ Σ̂ Γ⁻¹` of the covariance of
/// `√n (θ̂ − θ₀)`, where `Σ̂` is the empirical covariance of the per-sample
/// estimating function `Γ(x_i)θ̂ − g(x_i)`.
pub fn asymptotic_covariance<F: ExpFamily + ?Sized>(
    fam: &F,
    data: &DMatrix<f64>,
    h: &[HFunction],
    theta_hat: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let q = assemble_quadratic(fam, data, h)?;
    let (n, r) = (data.nrows(), fam.r());
    if theta_hat.len() != r {
        return Err(Error::Domain(format!("θ̂ has length {}, expected {r}", theta_hat.len())));
    }
    let mean_score = &q.gamma * theta_hat - &q.g;
    let parts = par::try_chunked(n, |rows| {
        let mut p = Partials { dt: vec![0.0; r], ddt: vec![0.0; r], db: 0.0, ddb: 0.0, h: 0.0, dh: 0.0 };
        let mut sigma = DMatrix::zeros(r, r);
        for i in rows {
            let mut gi = DMatrix::zeros(r, r);
            let mut vi = DVector::zeros(r);
            accumulate_sample(fam, &row(data, i), i, h, &mut p, &mut gi, &mut vi)?;
            let s = &gi * theta_hat - vi - &mean_score;
            sigma += &s * s.transpose();
        }
        Ok(sigma)
    })?;
    let mut sigma = DMatrix::zeros(r, r);
    for s in parts {
        sigma += s;
    }
    sigma /= n as f64;
    let inv = linalg::inverse_spd(&q.gamma, "Γ is (numerically) singular; collect more samples")?;
    let cov = &inv * sigma * &inv;
    Ok((&cov + cov.transpose()) * 0.5)
}
