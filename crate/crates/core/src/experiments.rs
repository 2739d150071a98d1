//! Simulation harness for graph recovery: random sparse `K₀`, seeded
//! trials, ROC curves along the regularization path, vertical averaging and
//! AUC summaries.
//!
//! Every random draw derives from the config seed. Matrix `a` uses stream
//! `a << 32` of [`stream_rng`]; trial `b` of that matrix uses stream
//! `(a << 32) | (b + 1)`, which drives both `μ₀` and the data. All methods
//! see the same dataset in a given trial, so their AUCs pair up.
//!
//! ```
//! use hscore::experiments::{auc, roc_curve, vertical_average};
//!
//! let truth = vec![(0, 1), (1, 2)];
//! let supports = vec![vec![], vec![(0, 1)], vec![(0, 1), (1, 2)], vec![(0, 1), (0, 2), (1, 2)]];
//! let roc = roc_curve(&supports, &truth, 3).unwrap();
//! assert_eq!(auc(&roc), 1.0);
//! let avg = vertical_average(&[roc.clone(), roc]).unwrap();
//! assert!((auc(&avg) - 1.0).abs() < 1e-12);
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hfuncs::{self, HFunction};
use crate::tggm::{self, FitOptions};
use crate::truncated_normal::{sample_with_rng, stream_rng, SamplerOptions, TnParams};
use crate::{io, linalg};

/// Number of FPR abscissae used for vertical averaging.
pub const FPR_GRID: usize = 201;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub n_blocks: usize,
    /// Probability that a within-block off-diagonal entry is zero.
    pub pi: f64,
    pub edge_range: (f64, f64),
    pub min_eigenvalue: f64,
    pub centered: bool,
    /// Standard deviation of the entries of `μ₀` (non-centered runs).
    pub mu_sd: f64,
    pub h: Vec<HFunction>,
    /// `λ_K / λ_η` values; only used for non-centered runs.
    pub ratios: Vec<f64>,
    pub lambda_count: usize,
    pub trials: usize,
    pub matrices: usize,
    pub seed: u64,
    pub diag_multiplier: f64,
    pub scale: bool,
    pub sampler: SamplerOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            m: 20,
            n: 40,
            n_blocks: 2,
            pi: 0.2,
            edge_range: (0.5, 1.0),
            min_eigenvalue: 0.1,
            centered: true,
            mu_sd: 0.5,
            h: ["pow:2", "min_pow:1:3", "min_log1p:2"].iter().map(|s| s.parse().expect("built-in id")).collect(),
            ratios: vec![f64::INFINITY],
            lambda_count: 50,
            trials: 10,
            matrices: 5,
            seed: 1,
            diag_multiplier: 1.01,
            scale: true,
            sampler: SamplerOptions::default(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v {
        "Inf" | "inf" | "INF" => Ok(f64::INFINITY),
        _ => v.parse().map_err(|_| Error::Parse(format!("{key}: '{v}' is not a number"))),
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Parse(format!("{key}: '{v}' is not a non-negative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse(format!("{key}: '{v}' is not a boolean"))),
    }
}

impl ExperimentConfig {
    /// Sets one `key = value` setting (keys as in the config file format).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "m" => self.m = parse_usize(key, v)?,
            "n" => self.n = parse_usize(key, v)?,
            "n_blocks" => self.n_blocks = parse_usize(key, v)?,
            "pi" => self.pi = parse_f64(key, v)?,
            "edge_min" => self.edge_range.0 = parse_f64(key, v)?,
            "edge_max" => self.edge_range.1 = parse_f64(key, v)?,
            "min_eigenvalue" => self.min_eigenvalue = parse_f64(key, v)?,
            "centered" => self.centered = parse_bool(key, v)?,
            "mu_sd" => self.mu_sd = parse_f64(key, v)?,
            "h" => self.h = v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?,
            "ratios" | "ratio_k_eta" => self.ratios = v.split(',').map(|s| parse_f64(key, s.trim())).collect::<Result<_>>()?,
            "lambda_count" => self.lambda_count = parse_usize(key, v)?,
            "trials" => self.trials = parse_usize(key, v)?,
            "matrices" => self.matrices = parse_usize(key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| Error::Parse(format!("seed: '{v}' is not an integer")))?,
            "diag_multiplier" => self.diag_multiplier = parse_f64(key, v)?,
            "scale" => self.scale = parse_bool(key, v)?,
            "sampler" => self.sampler.method = v.parse()?,
            "burn_in" => self.sampler.burn_in = parse_usize(key, v)?,
            "thin" => self.sampler.thin = parse_usize(key, v)?,
            other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a plain-text config: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", i + 1)))?;
            self.set(k, v).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(msg));
        if self.m < 2 {
            return fail(format!("m must be at least 2, got {}", self.m));
        }
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if self.n_blocks == 0 || self.m % self.n_blocks != 0 {
            return fail(format!("m = {} is not divisible by n_blocks = {}", self.m, self.n_blocks));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return fail(format!("pi must lie in [0, 1], got {}", self.pi));
        }
        let (lo, hi) = self.edge_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return fail(format!("edge range [{lo}, {hi}] is invalid"));
        }
        if !(self.min_eigenvalue > 0.0) {
            return fail(format!("min_eigenvalue must be > 0, got {}", self.min_eigenvalue));
        }
        if !(self.mu_sd >= 0.0) {
            return fail(format!("mu_sd must be >= 0, got {}", self.mu_sd));
        }
        if self.h.is_empty() {
            return fail("at least one h is required".into());
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(*r > 0.0)) {
            return fail("ratios must be positive (or Inf)".into());
        }
        if self.lambda_count == 0 {
            return fail("lambda_count must be at least 1".into());
        }
        if self.matrices == 0 || self.trials == 0 || self.trials % self.matrices != 0 {
            return fail(format!("trials = {} must be a positive multiple of matrices = {}", self.trials, self.matrices));
        }
        Ok(())
    }

    /// The (h, ratio) combinations compared by the experiment.
    pub fn methods(&self) -> Vec<Method> {
        let ratios = if self.centered { vec![f64::INFINITY] } else { self.ratios.clone() };
        let labelled = ratios.len() > 1;
        self.h
            .iter()
            .flat_map(|h| {
                ratios.iter().map(move |&ratio| Method {
                    id: if labelled { format!("{h}|ratio={}", fmt_ratio(ratio)) } else { h.to_string() },
                    h: h.clone(),
                    ratio,
                })
            })
            .collect()
    }
}

fn fmt_ratio(r: f64) -> String {
    if r.is_infinite() {
        "Inf".into()
    } else {
        r.to_string()
    }
}

#[derive(Clone, Debug)]
pub struct Method {
    pub id: String,
    pub h: HFunction,
    pub ratio: f64,
}

/// Stream of matrix `a`.
pub fn matrix_stream(a: usize) -> u64 {
    (a as u64) << 32
}

/// Stream of trial `b` of matrix `a`.
pub fn trial_stream(a: usize, b: usize) -> u64 {
    ((a as u64) << 32) | (b as u64 + 1)
}

/// Block-diagonal `K₀`: within each block an off-diagonal entry is zero with
/// probability `π`, otherwise uniform on the edge range; the common diagonal
/// value puts the smallest eigenvalue at `min_eigenvalue`.
pub fn gen_k0<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<DMatrix<f64>> {
    config.validate()?;
    let m = config.m;
    let b = m / config.n_blocks;
    let (lo, hi) = config.edge_range;
    let mut k = DMatrix::zeros(m, m);
    for block in 0..config.n_blocks {
        let base = block * b;
        for j in 0..b {
            for i in j + 1..b {
                let zero = rng.random::<f64>() < config.pi;
                let u = rng.random::<f64>();
                if !zero {
                    let v = lo + (hi - lo) * u;
                    k[(base + i, base + j)] = v;
                    k[(base + j, base + i)] = v;
                }
            }
        }
    }
    // eigenvalues of A + dI are those of A shifted by d
    let d = config.min_eigenvalue - linalg::min_eigenvalue(&k);
    for j in 0..m {
        k[(j, j)] = d;
    }
    Ok(k)
}

/// Off-diagonal support `(i, j)`, `i < j`, of a matrix, in row-major order.
pub fn support_of(k: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let m = k.nrows();
    (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).filter(|&(i, j)| k[(i, j)] != 0.0).collect()
}

/// A ROC curve as a function: strictly increasing FPR from 0 to 1, one TPR
/// per FPR, linear in between.
#[derive(Clone, Debug, PartialEq)]
pub struct Roc {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

impl Roc {
    /// Builds the curve from raw points, adding `(0, 0)` and `(1, 1)` and
    /// keeping the largest TPR where several points share an FPR.
    pub fn from_points(points: &[(f64, f64)]) -> Roc {
        let mut pts: Vec<(f64, f64)> = points.to_vec();
        pts.push((0.0, 0.0));
        pts.push((1.0, 1.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut fpr: Vec<f64> = Vec::new();
        let mut tpr: Vec<f64> = Vec::new();
        for (f, t) in pts {
            if fpr.last() == Some(&f) {
                let last = tpr.last_mut().expect("parallel vectors");
                *last = last.max(t);
            } else {
                fpr.push(f);
                tpr.push(t);
            }
        }
        Roc { fpr, tpr }
    }

    /// TPR at `f` by linear interpolation.
    pub fn tpr_at(&self, f: f64) -> f64 {
        let i = self.fpr.partition_point(|&x| x <= f);
        if i == 0 {
            return self.tpr[0];
        }
        if i == self.fpr.len() {
            return *self.tpr.last().expect("non-empty curve");
        }
        let (x0, x1, y0, y1) = (self.fpr[i - 1], self.fpr[i], self.tpr[i - 1], self.tpr[i]);
        y0 + (y1 - y0) * (f - x0) / (x1 - x0)
    }
}

/// Trapezoidal area under the curve.
pub fn auc(roc: &Roc) -> f64 {
    roc.fpr.windows(2).zip(roc.tpr.windows(2)).map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0).sum()
}

fn rates(support: &[(usize, usize)], truth: &[(usize, usize)], negatives: usize) -> (f64, f64) {
    let hits = support.iter().filter(|e| truth.binary_search(e).is_ok()).count();
    let fp = support.len() - hits;
    (fp as f64 / negatives as f64, hits as f64 / truth.len() as f64)
}

fn check_truth(truth: &[(usize, usize)], m: usize) -> Result<(Vec<(usize, usize)>, usize)> {
    let mut t = truth.to_vec();
    t.sort_unstable();
    t.dedup();
    let total = m * (m - 1) / 2;
    if t.is_empty() {
        return Err(Error::Domain("true graph has no edges, so TPR is undefined; use pi < 1".into()));
    }
    if t.len() == total {
        return Err(Error::Domain("true graph is complete, so FPR is undefined".into()));
    }
    let negatives = total - t.len();
    Ok((t, negatives))
}

/// One `(FPR, TPR)` per estimated support, as a [`Roc`].
pub fn roc_curve(supports: &[Vec<(usize, usize)>], truth: &[(usize, usize)], m: usize) -> Result<Roc> {
    let (t, negatives) = check_truth(truth, m)?;
    let pts: Vec<(f64, f64)> = supports.iter().map(|s| rates(s, &t, negatives)).collect();
    Ok(Roc::from_points(&pts))
}

/// ROC of an external edge scoring (larger score = more confident edge),
/// thresholded at every distinct score. `scores` holds `(i, j, score)`
/// with `i < j`; missing pairs count as never selected.
pub fn roc_from_edge_scores(scores: &[(usize, usize, f64)], truth: &[(usize, usize)], m: usize) -> Result<Roc> {
    let (t, negatives) = check_truth(truth, m)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut pts = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].2;
        while i < sorted.len() && sorted[i].2 == s {
            if t.binary_search(&(sorted[i].0, sorted[i].1)).is_ok() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / negatives as f64, tp as f64 / t.len() as f64));
    }
    Ok(Roc::from_points(&pts))
}

/// Averages TPR across curves at `FPR_GRID` evenly spaced FPR values.
pub fn vertical_average(curves: &[Roc]) -> Result<Roc> {
    if curves.is_empty() {
        return Err(Error::Domain("cannot average an empty list of ROC curves".into()));
    }
    let grid: Vec<f64> = (0..FPR_GRID).map(|i| i as f64 / (FPR_GRID - 1) as f64).collect();
    let tpr = grid
        .iter()
        .map(|&f| curves.iter().map(|c| c.tpr_at(f)).sum::<f64>() / curves.len() as f64)
        .collect();
    Ok(Roc { fpr: grid, tpr })
}

/// Outcome of one method on one trial.
#[derive(Clone, Debug, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub matrix: usize,
    pub stream: u64,
    pub method: String,
    #[serde(skip)]
    pub roc: Option<Roc>,
    pub auc: Option<f64>,
    /// `(FPR, TPR)` of the eBIC-selected (refit) model.
    pub ebic_point: Option<(f64, f64)>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct MethodSummary {
    pub id: String,
    pub average_roc: Option<Roc>,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub ebic_point: Option<(f64, f64)>,
    pub completed: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub methods: Vec<MethodSummary>,
    pub trials: Vec<TrialResult>,
    pub seed: u64,
    pub matrices: usize,
    pub trials_per_matrix: usize,
}

/// Everything drawn for one trial.
pub struct TrialData {
    pub k0: DMatrix<f64>,
    pub mu0: Option<DVector<f64>>,
    pub data: DMatrix<f64>,
}

/// Regenerates the dataset of trial `b` of matrix `a`.
pub fn trial_data(config: &ExperimentConfig, k0: &DMatrix<f64>, a: usize, b: usize) -> Result<TrialData> {
    let mut rng = stream_rng(config.seed, trial_stream(a, b));
    let mu0 = if config.centered {
        None
    } else {
        let normal = Normal::new(0.0, config.mu_sd).map_err(|e| Error::Domain(e.to_string()))?;
        Some(DVector::from_fn(config.m, |_, _| normal.sample(&mut rng)))
    };
    let params = match &mu0 {
        None => TnParams::centered(k0.clone())?,
        Some(mu) => TnParams::with_mu(k0.clone(), mu.clone())?,
    };
    let data = sample_with_rng(&params, config.n, &mut rng, &config.sampler)?.data;
    Ok(TrialData { k0: k0.clone(), mu0, data })
}

/// Path, ROC and eBIC point for one method on one dataset.
pub fn evaluate_method(config: &ExperimentConfig, method: &Method, data: &DMatrix<f64>, truth: &[(usize, usize)]) -> Result<(Roc, Option<(f64, f64)>)> {
    let m = config.m;
    let scaled = if config.scale { tggm::scale_columns(data, &tggm::column_scales(data)?) } else { data.clone() };
    let h = hfuncs::shared(&method.h, m);
    let q = if config.centered { tggm::assemble_centered(&scaled, &h)? } else { tggm::assemble_noncentered(&scaled, &h)? };
    let opts = FitOptions { diag_multiplier: config.diag_multiplier, ratio: method.ratio, ..Default::default() };
    let path = tggm::solution_path(&q, None, config.lambda_count, &opts)?;
    let supports: Vec<Vec<(usize, usize)>> = path.fits.iter().map(|f| f.support.clone()).collect();
    let roc = roc_curve(&supports, truth, m)?;
    let point = match tggm::select_index(&path, true) {
        Some(i) => {
            let (t, negatives) = check_truth(truth, m)?;
            Some(rates(&supports[i], &t, negatives))
        }
        None => None,
    };
    Ok((roc, point))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Runs every method on every trial. Trials run in parallel on the current
/// rayon pool; results do not depend on the pool size. A failing trial is
/// recorded with its error and left out of the averages.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let per = config.trials / config.matrices;
    let k0s: Vec<DMatrix<f64>> = (0..config.matrices)
        .map(|a| gen_k0(config, &mut stream_rng(config.seed, matrix_stream(a))))
        .collect::<Result<_>>()?;
    let methods = config.methods();
    let results: Vec<Vec<TrialResult>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let (a, b) = (t / per, t % per);
            let stream = trial_stream(a, b);
            let record = |method: &Method, outcome: Result<(Roc, Option<(f64, f64)>)>| match outcome {
                Ok((roc, point)) => TrialResult {
                    trial: t,
                    matrix: a,
                    stream,
                    method: method.id.clone(),
                    auc: Some(auc(&roc)),
                    roc: Some(roc),
                    ebic_point: point,
                    error: None,
                },
                Err(e) => TrialResult {
                    trial: t,
                    matrix: a,
                    stream,
                    method: method.id.clone(),
                    roc: None,
                    auc: None,
                    ebic_point: None,
                    error: Some(e.to_string()),
                },
            };
            let truth = support_of(&k0s[a]);
            match trial_data(config, &k0s[a], a, b) {
                Ok(td) => methods.iter().map(|meth| record(meth, evaluate_method(config, meth, &td.data, &truth))).collect(),
                Err(e) => methods.iter().map(|meth| record(meth, Err(Error::Sampler(e.to_string())))).collect(),
            }
        })
        .collect();
    let trials: Vec<TrialResult> = results.into_iter().flatten().collect();

    let summaries = methods
        .iter()
        .map(|meth| {
            let done: Vec<&TrialResult> = trials.iter().filter(|r| r.method == meth.id && r.error.is_none()).collect();
            let aucs: Vec<f64> = done.iter().filter_map(|r| r.auc).collect();
            let curves: Vec<Roc> = done.iter().filter_map(|r| r.roc.clone()).collect();
            let points: Vec<(f64, f64)> = done.iter().filter_map(|r| r.ebic_point).collect();
            let (mean_auc, sd_auc) = mean_sd(&aucs);
            let ebic_point = if points.is_empty() {
                None
            } else {
                let k = points.len() as f64;
                Some((points.iter().map(|p| p.0).sum::<f64>() / k, points.iter().map(|p| p.1).sum::<f64>() / k))
            };
            MethodSummary {
                id: meth.id.clone(),
                average_roc: vertical_average(&curves).ok(),
                mean_auc,
                sd_auc,
                ebic_point,
                completed: done.len(),
            }
        })
        .collect();
    Ok(ExperimentSummary { methods: summaries, trials, seed: config.seed, matrices: config.matrices, trials_per_matrix: per })
}

/// File-name-safe form of a method id.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn csv_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

impl ExperimentSummary {
    pub fn auc_csv(&self) -> String {
        let mut s = String::from("h_id,mean_auc,sd_auc\n");
        for m in &self.methods {
            let _ = writeln!(s, "{},{},{}", m.id, csv_num(m.mean_auc), csv_num(m.sd_auc));
        }
        s
    }

    pub fn ebic_csv(&self) -> String {
        let mut s = String::from("h_id,fpr,tpr\n");
        for m in &self.methods {
            let (f, t) = m.ebic_point.unwrap_or((f64::NAN, f64::NAN));
            let _ = writeln!(s, "{},{},{}", m.id, csv_num(f), csv_num(t));
        }
        s
    }

    pub fn trials_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial", "matrix", "h_id", "auc", "ebic_fpr", "ebic_tpr", "error"]).expect("in-memory write");
        for r in &self.trials {
            let (f, t) = r.ebic_point.unwrap_or((f64::NAN, f64::NAN));
            w.write_record([
                r.trial.to_string(),
                r.matrix.to_string(),
                r.method.clone(),
                r.auc.map(csv_num).unwrap_or_default(),
                csv_num(f),
                csv_num(t),
                r.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    pub fn roc_csv(roc: &Roc) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in roc.fpr.iter().zip(&roc.tpr) {
            let _ = writeln!(s, "{f},{t}");
        }
        s
    }

    pub fn manifest_json(&self) -> String {
        let matrices: Vec<BTreeMap<&str, u64>> = (0..self.matrices)
            .map(|a| BTreeMap::from([("matrix", a as u64), ("stream", matrix_stream(a))]))
            .collect();
        let trials: Vec<BTreeMap<&str, u64>> = (0..self.matrices * self.trials_per_matrix)
            .map(|t| {
                let (a, b) = (t / self.trials_per_matrix, t % self.trials_per_matrix);
                BTreeMap::from([("trial", t as u64), ("matrix", a as u64), ("stream", trial_stream(a, b))])
            })
            .collect();
        let manifest = serde_json::json!({
            "seed": self.seed,
            "generator": "ChaCha8, seeded from seed, one stream per matrix and per trial",
            "matrix_stream": "matrix << 32",
            "trial_stream": "(matrix << 32) | (trial_within_matrix + 1)",
            "matrices": matrices,
            "trials": trials,
        });
        serde_json::to_string_pretty(&manifest).expect("plain data serializes")
    }

    /// Writes `roc_<method>.csv`, `auc_summary.csv`, `ebic_points.csv`,
    /// `trials.csv` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
        for m in &self.methods {
            if let Some(roc) = &m.average_roc {
                io::write_atomic(&dir.join(format!("roc_{}.csv", file_stem(&m.id))), Self::roc_csv(roc).as_bytes())?;
            }
        }
        io::write_atomic(&dir.join("auc_summary.csv"), self.auc_csv().as_bytes())?;
        io::write_atomic(&dir.join("ebic_points.csv"), self.ebic_csv().as_bytes())?;
        io::write_atomic(&dir.join("trials.csv"), self.trials_csv().as_bytes())?;
        io::write_atomic(&dir.join("manifest.json"), self.manifest_json().as_bytes())?;
        Ok(())
    }
}
