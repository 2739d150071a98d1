//! Closed-form univariate estimators for the truncated normal on `[0, ∞)`,
//! their asymptotic variances and Cramér–Rao efficiencies.
//!
//! With `σ²` known, the mean estimator is
//! `μ̂ = Σ [h(X)X − σ²h'(X)] / Σ h(X)`; with `μ` known, the variance
//! estimator is `σ̂² = Σ h(X)(X−μ)² / Σ [h(X) + h'(X)(X−μ)]`.
//!
//! ```
//! use hscore::hfuncs::HFunction;
//! use hscore::univariate::{mu_hat, Target, UnivariateTask};
//!
//! let task = UnivariateTask::new(Target::Mu, 1.0, HFunction::power(1.0).unwrap()).unwrap();
//! assert_eq!(mu_hat(&task, &[1.0, 2.0]).unwrap(), 1.0);
//! ```

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hfuncs::HFunction;
use crate::quadrature::{self, Tolerance};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Unknown mean, known variance.
    Mu,
    /// Unknown variance, known mean.
    Sigma2,
}

#[derive(Clone, Debug)]
pub struct UnivariateTask {
    pub target: Target,
    /// `σ²` when estimating `μ`; `μ` when estimating `σ²`.
    pub known: f64,
    pub h: HFunction,
}

impl UnivariateTask {
    pub fn new(target: Target, known: f64, h: HFunction) -> Result<Self> {
        if !known.is_finite() || (target == Target::Mu && known <= 0.0) {
            return Err(Error::Domain(format!("known value {known} is invalid (σ² must be > 0)")));
        }
        Ok(UnivariateTask { target, known, h })
    }
}

fn check_data(data: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Domain("no observations".into()));
    }
    match data.iter().position(|&x| !(x.is_finite() && x >= 0.0)) {
        Some(i) => Err(Error::Domain(format!("observation {} = {} is not a finite non-negative number", i + 1, data[i]))),
        None => Ok(()),
    }
}

pub fn mu_hat(task: &UnivariateTask, data: &[f64]) -> Result<f64> {
    if task.target != Target::Mu {
        return Err(Error::Domain("mu_hat needs a task with target mu".into()));
    }
    check_data(data)?;
    let s2 = task.known;
    let (mut num, mut den) = (0.0, 0.0);
    for &x in data {
        let (h, dh) = task.h.eval_unchecked(x);
        num += h * x - s2 * dh;
        den += h;
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate("Σ h(X_i) is zero; h vanishes on every observation".into()));
    }
    Ok(num / den)
}

pub fn sigma2_hat(task: &UnivariateTask, data: &[f64]) -> Result<f64> {
    if task.target != Target::Sigma2 {
        return Err(Error::Domain("sigma2_hat needs a task with target sigma2".into()));
    }
    check_data(data)?;
    let mu = task.known;
    let (mut num, mut den) = (0.0, 0.0);
    for &x in data {
        let (h, dh) = task.h.eval_unchecked(x);
        num += h * (x - mu).powi(2);
        den += h + dh * (x - mu);
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("denominator Σ[h + h'(X−μ)] = {den:e} is not positive")));
    }
    Ok(num / den)
}

/// Expectations under the truncated normal `N(μ, σ²) | X ≥ 0`.
struct Expectation {
    mu: f64,
    sigma: f64,
    peak: f64,
    upper: f64,
    breaks: Vec<f64>,
    norm: f64,
}

/// Integration window in standard deviations above `max(μ, 0)`.
const WIDTH_SD: f64 = 12.0;

impl Expectation {
    fn new(mu: f64, sigma2: f64, h: &HFunction, width_sd: f64) -> Result<Self> {
        let sigma = sigma2.sqrt();
        let peak = mu.max(0.0);
        let mut e = Expectation { mu, sigma, peak, upper: peak + width_sd * sigma, breaks: h.kink_points(), norm: 1.0 };
        e.norm = e.raw(|_| 1.0)?;
        if !(e.norm > 0.0) {
            return Err(Error::Quadrature("normalizing integral vanished".into()));
        }
        Ok(e)
    }

    /// Density rescaled so its maximum over the support is 1.
    fn weight(&self, x: f64) -> f64 {
        let (a, b) = ((x - self.mu) / self.sigma, (self.peak - self.mu) / self.sigma);
        (-0.5 * (a - b) * (a + b)).exp()
    }

    fn raw<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let mut breaks = self.breaks.clone();
        breaks.push(self.peak);
        quadrature::integrate(|x| f(x) * self.weight(x), 0.0, self.upper, &breaks, Tolerance { abs: 1e-15, rel: 1e-12 })
    }

    fn mean<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        Ok(self.raw(f)? / self.norm)
    }
}

fn asym_var_width(task: &UnivariateTask, theta0: f64, width_sd: f64) -> Result<f64> {
    let h = &task.h;
    let hv = |x: f64| h.eval_unchecked(x);
    // the boundary term at 0 vanishes only if h(0) = 0, or for σ² when μ = 0
    let boundary_free = task.target == Target::Sigma2 && task.known == 0.0;
    if !boundary_free && hv(0.0).0 != 0.0 {
        return Err(Error::Domain(format!("{h} has h(0) != 0, so the boundary term does not vanish and the variance formula does not apply")));
    }
    let value = match task.target {
        Target::Mu => {
            let s2 = task.known;
            let e = Expectation::new(theta0, s2, h, width_sd)?;
            let eh = e.mean(|x| hv(x).0)?;
            let eh2 = e.mean(|x| hv(x).0.powi(2))?;
            let edh2 = e.mean(|x| hv(x).1.powi(2))?;
            (s2 * eh2 + s2 * s2 * edh2) / (eh * eh)
        }
        Target::Sigma2 => {
            let (mu, s2) = (task.known, theta0);
            if !(s2 > 0.0) {
                return Err(Error::Domain(format!("σ₀² must be > 0, got {s2}")));
            }
            let e = Expectation::new(mu, s2, h, width_sd)?;
            let d2 = |x: f64| (x - mu).powi(2);
            let a = e.mean(|x| hv(x).0.powi(2) * d2(x))?;
            let b = e.mean(|x| hv(x).1.powi(2) * d2(x))?;
            let c = e.mean(|x| hv(x).0 * d2(x))?;
            (2.0 * s2.powi(3) * a + s2.powi(4) * b) / (c * c)
        }
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Quadrature(format!("asymptotic variance evaluated to {value}")));
    }
    Ok(value)
}

/// Asymptotic variance of `√n (θ̂ − θ₀)` at the true value `θ₀` (`μ₀` or
/// `σ₀²`), with expectations by adaptive quadrature.
pub fn asym_var(task: &UnivariateTask, theta0: f64) -> Result<f64> {
    asym_var_width(task, theta0, WIDTH_SD)
}

/// Inverse Fisher information of the truncated model at `θ₀`.
///
/// The score is `(X−μ)/σ²` (resp. `(X−μ)²/2σ⁴`) minus the derivative of the
/// log-normalizer, a constant that drops out of the variance, so the bound
/// is `σ⁴ / Var(X)` for the mean and `4σ⁸ / Var((X−μ)²)` for the variance.
pub fn cramer_rao(target: Target, known: f64, theta0: f64) -> Result<f64> {
    let none = HFunction::constant(1.0)?;
    let (mu, s2) = match target {
        Target::Mu => (theta0, known),
        Target::Sigma2 => (known, theta0),
    };
    if !(s2 > 0.0) {
        return Err(Error::Domain(format!("σ² must be > 0, got {s2}")));
    }
    let e = Expectation::new(mu, s2, &none, WIDTH_SD)?;
    // central moments about the peak keep cancellation small
    let c = e.peak;
    let (f, scale) = match target {
        Target::Mu => (Box::new(move |x: f64| x - c) as Box<dyn Fn(f64) -> f64>, s2 * s2),
        Target::Sigma2 => (Box::new(move |x: f64| (x - mu).powi(2)) as Box<dyn Fn(f64) -> f64>, 4.0 * s2.powi(4)),
    };
    let m1 = e.mean(&f)?;
    let var = e.mean(|x| (f(x) - m1).powi(2))?;
    if !(var > 0.0) {
        return Err(Error::Quadrature("score variance vanished".into()));
    }
    Ok(scale / var)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyRow {
    pub theta0: f64,
    pub h_id: String,
    pub asym_var: f64,
    pub cr_bound: f64,
    pub efficiency: f64,
}

/// Efficiency `CR(θ₀) / asym_var(h, θ₀)` over a grid of true values and a
/// list of weight functions; rows are ordered by grid point, then by `h`.
pub fn efficiency_curve(target: Target, known: f64, grid: &[f64], hs: &[HFunction]) -> Result<Vec<EfficiencyRow>> {
    let rows: Vec<Result<Vec<EfficiencyRow>>> = grid
        .par_iter()
        .map(|&theta0| {
            let cr = cramer_rao(target, known, theta0)?;
            hs.iter()
                .map(|h| {
                    let task = UnivariateTask::new(target, known, h.clone())?;
                    let v = asym_var(&task, theta0)?;
                    Ok(EfficiencyRow { theta0, h_id: h.to_string(), asym_var: v, cr_bound: cr, efficiency: cr / v })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// CSV with header `theta0,h_id,asym_var,cr_bound,efficiency`.
pub fn efficiency_csv(rows: &[EfficiencyRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theta0", "h_id", "asym_var", "cr_bound", "efficiency"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.theta0.to_string(),
            r.h_id.clone(),
            r.asym_var.to_string(),
            r.cr_bound.to_string(),
            r.efficiency.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn task(target: Target, known: f64, id: &str) -> UnivariateTask {
        UnivariateTask::new(target, known, id.parse().unwrap()).unwrap()
    }

    #[test]
    fn estimator_hand_examples() {
        assert_eq!(mu_hat(&task(Target::Mu, 1.0, "pow:1"), &[1.0, 2.0]).unwrap(), 1.0);
        assert_relative_eq!(mu_hat(&task(Target::Mu, 1.0, "pow:2"), &[1.0, 2.0]).unwrap(), 0.6, max_relative = 1e-15);
        assert_eq!(sigma2_hat(&task(Target::Sigma2, 0.0, "pow:1"), &[1.0, 2.0]).unwrap(), 1.5);
        assert_eq!(sigma2_hat(&task(Target::Sigma2, 0.0, "const:1"), &[1.0, 2.0]).unwrap(), 2.5);
    }

    #[test]
    fn constant_h_gives_sample_mean() {
        let d = [0.3, 1.7, 2.2, 0.9];
        let v = mu_hat(&task(Target::Mu, 1.0, "const:2"), &d).unwrap();
        assert_relative_eq!(v, d.iter().sum::<f64>() / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn degenerate_samples() {
        let t = task(Target::Mu, 1.0, "pow:1");
        assert!(matches!(mu_hat(&t, &[0.0, 0.0]), Err(Error::Degenerate(_))));
        assert!(matches!(mu_hat(&t, &[1.0, -1.0]), Err(Error::Domain(_))));
        assert!(mu_hat(&task(Target::Sigma2, 0.0, "pow:1"), &[1.0]).is_err());
    }

    #[test]
    fn closed_form_variances() {
        let v = asym_var(&task(Target::Mu, 1.0, "pow:1"), 0.0).unwrap();
        assert_relative_eq!(v, PI, max_relative = 1e-9);
        let v = asym_var(&task(Target::Sigma2, 0.0, "const:1"), 1.0).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn scale_invariance_in_h() {
        let base = asym_var(&task(Target::Mu, 1.0, "min_pow:1:3"), 0.7).unwrap();
        for c in [0.1, 2.0, 10.0] {
            let h = HFunction::custom("scaled", move |x| (c * x.min(3.0), if x <= 3.0 { c } else { 0.0 }), None, None);
            let t = UnivariateTask::new(Target::Mu, 1.0, h).unwrap();
            // kinks are unknown to a custom h, so quadrature adapts instead
            assert_relative_eq!(asym_var(&t, 0.7).unwrap(), base, max_relative = 1e-8);
        }
    }

    #[test]
    fn truncation_window_is_wide_enough() {
        for (t, th) in [(task(Target::Mu, 1.0, "log1p"), -1.0), (task(Target::Sigma2, 0.5, "pow:2"), 1.3)] {
            let a = asym_var_width(&t, th, WIDTH_SD).unwrap();
            let b = asym_var_width(&t, th, 2.0 * WIDTH_SD).unwrap();
            assert!(((a - b) / a).abs() < 1e-8);
        }
    }

    #[test]
    fn efficiency_never_exceeds_one() {
        let hs: Vec<HFunction> =
            ["pow:1", "pow:2", "min_log1p:1", "min_log1p:2", "min_pow:1:3", "mcp:2"].iter().map(|s| s.parse().unwrap()).collect();
        let grid = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        for row in efficiency_curve(Target::Mu, 1.0, &grid, &hs).unwrap() {
            assert!(row.efficiency > 0.0 && row.efficiency <= 1.0 + 1e-9, "{row:?}");
        }
        let hs = ["min_pow:1:3".parse().unwrap(), "pow:1".parse().unwrap()];
        for row in efficiency_curve(Target::Sigma2, 0.5, &[0.5, 1.0, 2.0], &hs).unwrap() {
            assert!(row.efficiency <= 1.0 + 1e-9, "{row:?}");
        }
    }

    #[test]
    fn constant_h_attains_the_bound_for_zero_mean() {
        let rows = efficiency_curve(Target::Sigma2, 0.0, &[0.25, 1.0, 4.0], &[HFunction::constant(1.0).unwrap()]).unwrap();
        for r in rows {
            assert!((r.efficiency - 1.0).abs() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn nonzero_h_at_origin_is_rejected_when_the_boundary_term_survives() {
        let c = HFunction::constant(1.0).unwrap();
        assert!(asym_var(&UnivariateTask::new(Target::Mu, 1.0, c.clone()).unwrap(), 0.0).is_err());
        assert!(asym_var(&UnivariateTask::new(Target::Sigma2, 0.5, c.clone()).unwrap(), 1.0).is_err());
        assert!(asym_var(&UnivariateTask::new(Target::Sigma2, 0.0, c).unwrap(), 1.0).is_ok());
    }

    #[test]
    fn csv_layout() {
        let rows = efficiency_curve(Target::Mu, 1.0, &[0.0], &["pow:1".parse().unwrap()]).unwrap();
        let text = efficiency_csv(&rows);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "theta0,h_id,asym_var,cr_bound,efficiency");
        assert!(lines.next().unwrap().starts_with("0,pow:1,"));
    }
}
