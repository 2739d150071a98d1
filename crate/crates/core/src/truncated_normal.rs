//! Truncated multivariate normal distributions on the non-negative orthant.
//!
//! `TN(μ, K)` has unnormalized density `exp(-½ (x-μ)ᵀ K (x-μ))` on `[0, ∞)^m`.
//! The normalizing constant is never needed: everything downstream works
//! with `∇ log p`, from which it cancels.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg;

/// Generator used for every random draw in the crate.
pub type SimRng = ChaCha8Rng;

/// Deterministic generator for `(seed, stream)`. Streams are independent
/// ChaCha sequences under one seed, so trial `t` can be regenerated without
/// replaying trials `0..t`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeanForm {
    Mu(DVector<f64>),
    Eta(DVector<f64>),
}

/// Parameters of `TN(μ, K)`; the location is stored either as `μ` or as the
/// canonical `η = Kμ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TnParams {
    k: DMatrix<f64>,
    mean: MeanForm,
    centered: bool,
}

impl TnParams {
    pub fn centered(k: DMatrix<f64>) -> Result<Self> {
        let m = k.nrows();
        Self::build(k, MeanForm::Mu(DVector::zeros(m)), true)
    }

    pub fn with_mu(k: DMatrix<f64>, mu: DVector<f64>) -> Result<Self> {
        Self::build(k, MeanForm::Mu(mu), false)
    }

    pub fn with_eta(k: DMatrix<f64>, eta: DVector<f64>) -> Result<Self> {
        Self::build(k, MeanForm::Eta(eta), false)
    }

    fn build(k: DMatrix<f64>, mean: MeanForm, centered: bool) -> Result<Self> {
        let m = k.nrows();
        if m == 0 || k.ncols() != m {
            return Err(Error::Domain(format!("K must be square and non-empty, got {}x{}", k.nrows(), k.ncols())));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("K has non-finite entries".into()));
        }
        let scale = k.amax().max(1.0);
        if linalg::asymmetry(&k) > 1e-12 * scale {
            return Err(Error::Domain("K must be symmetric".into()));
        }
        let min_eig = linalg::min_eigenvalue(&k);
        if min_eig <= 1e-10 {
            return Err(Error::Domain(format!("K must be positive definite (min eigenvalue {min_eig:.3e})")));
        }
        let v = match &mean {
            MeanForm::Mu(v) | MeanForm::Eta(v) => v,
        };
        if v.len() != m || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("location vector must have {m} finite entries")));
        }
        if centered && v.iter().any(|&x| x != 0.0) {
            return Err(Error::Domain("centered parameters require a zero location".into()));
        }
        Ok(Self { k, mean, centered })
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn mean_form(&self) -> &MeanForm {
        &self.mean
    }

    pub fn mu(&self) -> DVector<f64> {
        match &self.mean {
            MeanForm::Mu(mu) => mu.clone(),
            MeanForm::Eta(eta) => self.k.clone().cholesky().expect("K is positive definite").solve(eta),
        }
    }

    pub fn eta(&self) -> DVector<f64> {
        match &self.mean {
            MeanForm::Mu(mu) => &self.k * mu,
            MeanForm::Eta(eta) => eta.clone(),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("point has {} coordinates, expected {}", x.len(), self.dim())));
        }
        if let Some((j, v)) = x.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::Domain(format!("coordinate {} = {v} is outside the non-negative orthant", j + 1)));
        }
        Ok(())
    }

    /// `-½ (x-μ)ᵀ K (x-μ)`, without the normalizing constant.
    pub fn log_density_unnormalized(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let d = DVector::from_column_slice(x) - self.mu();
        Ok(-0.5 * d.dot(&(&self.k * &d)))
    }

    /// `(∇ log p(x), diag ∇² log p(x)) = (η - Kx, -diag K)`.
    pub fn grad_and_diag_hessian(&self, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_point(x)?;
        let xv = DVector::from_column_slice(x);
        Ok((self.eta() - &self.k * xv, -self.k.diagonal()))
    }
}

/// JSON layout of [`TnParams`]: `{m, K (row-major), mu | eta, centered}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TnParamsJson {
    pub m: usize,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eta: Option<Vec<f64>>,
    pub centered: bool,
}

impl From<&TnParams> for TnParamsJson {
    fn from(p: &TnParams) -> Self {
        let m = p.dim();
        let k = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| p.k[(i, j)]).collect();
        let (mu, eta) = match &p.mean {
            MeanForm::Mu(v) => (Some(v.iter().copied().collect()), None),
            MeanForm::Eta(v) => (None, Some(v.iter().copied().collect())),
        };
        TnParamsJson { m, k, mu, eta, centered: p.centered }
    }
}

impl TryFrom<TnParamsJson> for TnParams {
    type Error = Error;

    fn try_from(j: TnParamsJson) -> Result<Self> {
        if j.k.len() != j.m * j.m {
            return Err(Error::Parse(format!("K has {} entries, expected {}", j.k.len(), j.m * j.m)));
        }
        let k = DMatrix::from_row_slice(j.m, j.m, &j.k);
        match (j.mu, j.eta, j.centered) {
            (Some(_), Some(_), _) => Err(Error::Parse("give either mu or eta, not both".into())),
            (None, None, _) => TnParams::centered(k),
            (Some(mu), None, true) | (None, Some(mu), true) => {
                if mu.iter().any(|&v| v != 0.0) {
                    return Err(Error::Domain("centered parameters require a zero location".into()));
                }
                TnParams::centered(k)
            }
            (Some(mu), None, false) => TnParams::with_mu(k, DVector::from_vec(mu)),
            (None, Some(eta), false) => TnParams::with_eta(k, DVector::from_vec(eta)),
        }
    }
}

impl TnParams {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TnParamsJson::from(self)).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TnParamsJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.try_into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMethod {
    /// Rejection when a probe batch accepts often (any workable rate for
    /// `m ≤ 3`); Gibbs otherwise.
    Auto,
    Rejection,
    Gibbs,
}

impl std::str::FromStr for SamplerMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "rejection" => Ok(Self::Rejection),
            "gibbs" => Ok(Self::Gibbs),
            _ => Err(Error::Parse(format!("unknown sampler '{s}' (auto, rejection, gibbs)"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SamplerOptions {
    pub method: SamplerMethod,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions { method: SamplerMethod::Auto, burn_in: 100, thin: 10 }
    }
}

/// Minimum rejection acceptance rate before the sampler gives up.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
const PROBE: usize = 10_000;
const AUTO_PROBE: usize = 2_000;
const AUTO_MIN_RATE: f64 = 0.05;
const AUTO_SMALL_DIM_RATE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct Sample {
    /// `n × m`, one observation per row.
    pub data: DMatrix<f64>,
    pub method: SamplerMethod,
    pub warnings: Vec<String>,
}

/// Draws `n` observations from `TN(μ, K)`, deterministically in `seed`.
pub fn sample(p: &TnParams, n: usize, seed: u64, opts: &SamplerOptions) -> Result<Sample> {
    sample_with_rng(p, n, &mut stream_rng(seed, 0), opts)
}

pub fn sample_with_rng<R: Rng + ?Sized>(p: &TnParams, n: usize, rng: &mut R, opts: &SamplerOptions) -> Result<Sample> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let method = match opts.method {
        SamplerMethod::Auto => {
            let rate = probe_acceptance(p, rng);
            if rate >= AUTO_MIN_RATE || (p.dim() <= 3 && rate >= AUTO_SMALL_DIM_RATE) {
                SamplerMethod::Rejection
            } else {
                SamplerMethod::Gibbs
            }
        }
        m => m,
    };
    match method {
        SamplerMethod::Rejection => Ok(Sample { data: rejection(p, n, rng)?, method, warnings: vec![] }),
        _ => {
            if opts.thin == 0 {
                return Err(Error::Domain("thinning interval must be at least 1".into()));
            }
            let warning = format!(
                "Gibbs draws are only approximately independent (burn-in {}, thinning {})",
                opts.burn_in, opts.thin
            );
            Ok(Sample { data: gibbs(p, n, opts.burn_in, opts.thin, rng), method, warnings: vec![warning] })
        }
    }
}

struct Proposal {
    mu: DVector<f64>,
    chol: DMatrix<f64>,
}

impl Proposal {
    fn new(p: &TnParams) -> Self {
        let cov = linalg::inverse_spd(p.k(), "K is positive definite").expect("validated K");
        let chol = cov.cholesky().expect("covariance is positive definite").l();
        Proposal { mu: p.mu(), chol }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut DVector<f64>, x: &mut DVector<f64>) -> bool {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        x.copy_from(&self.mu);
        x.gemv(1.0, &self.chol, z, 1.0);
        x.iter().all(|&v| v >= 0.0)
    }
}

fn probe_acceptance<R: Rng + ?Sized>(p: &TnParams, rng: &mut R) -> f64 {
    let prop = Proposal::new(p);
    let m = p.dim();
    let (mut z, mut x) = (DVector::zeros(m), DVector::zeros(m));
    let hits = (0..AUTO_PROBE).filter(|_| prop.draw(rng, &mut z, &mut x)).count();
    hits as f64 / AUTO_PROBE as f64
}

fn rejection<R: Rng + ?Sized>(p: &TnParams, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let m = p.dim();
    let prop = Proposal::new(p);
    let mut out = DMatrix::zeros(n, m);
    let (mut z, mut x) = (DVector::zeros(m), DVector::zeros(m));
    let (mut proposed, mut accepted) = (0usize, 0usize);
    while accepted < n {
        proposed += 1;
        if prop.draw(rng, &mut z, &mut x) {
            out.row_mut(accepted).copy_from(&x.transpose());
            accepted += 1;
        }
        if proposed % PROBE == 0 && (accepted as f64) < MIN_ACCEPTANCE * proposed as f64 {
            return Err(Error::Sampler(format!(
                "rejection acceptance rate {:.2e} after {proposed} proposals is below {MIN_ACCEPTANCE:e}; use the Gibbs sampler",
                accepted as f64 / proposed as f64
            )));
        }
    }
    Ok(out)
}

fn gibbs<R: Rng + ?Sized>(p: &TnParams, n: usize, burn_in: usize, thin: usize, rng: &mut R) -> DMatrix<f64> {
    let m = p.dim();
    let k = p.k();
    let eta = p.eta();
    let mut x: Vec<f64> = p.mu().iter().map(|&v| v.max(0.0)).collect();
    let mut out = DMatrix::zeros(n, m);
    let sweep = |x: &mut Vec<f64>, rng: &mut R| {
        for j in 0..m {
            let kjj = k[(j, j)];
            let mut s = eta[j];
            for (l, xl) in x.iter().enumerate() {
                if l != j {
                    s -= k[(j, l)] * xl;
                }
            }
            x[j] = sample_truncated_normal(s / kjj, 1.0 / kjj.sqrt(), rng);
        }
    };
    for _ in 0..burn_in {
        sweep(&mut x, rng);
    }
    for i in 0..n {
        for _ in 0..thin {
            sweep(&mut x, rng);
        }
        for j in 0..m {
            out[(i, j)] = x[j];
        }
    }
    out
}

/// Upper-tail probability `Q(a) = P(Z > a)`.
fn upper_tail(a: f64) -> f64 {
    0.5 * erfc(a / std::f64::consts::SQRT_2)
}

/// Inverse of [`upper_tail`].
fn upper_tail_inv(q: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * q)
}

/// One draw from `N(mean, sd²)` conditioned on being `≥ 0`.
///
/// Inverts the upper-tail function so that deep truncations keep full
/// relative precision; past eight standard deviations it switches to the
/// exact exponential-proposal rejection sampler.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    let a = -mean / sd;
    let z = if a < 8.0 {
        let u = 1.0 - rng.random::<f64>(); // (0, 1]
        upper_tail_inv(u * upper_tail(a)).max(a)
    } else {
        let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e = -(1.0 - rng.random::<f64>()).ln() / alpha;
            let z = a + e;
            let rho = (-0.5 * (z - alpha) * (z - alpha)).exp();
            if rng.random::<f64>() <= rho {
                break z;
            }
        }
    };
    (mean + sd * z).max(0.0)
}
