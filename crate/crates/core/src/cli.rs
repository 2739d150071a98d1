//! Command-line front end.
//!
//! Exit codes: `0` success, `1` bad input (unknown flag, unreadable file,
//! invalid value), `2` numerical failure (non-convergence, singular system,
//! sampler breakdown). On non-convergence the last iterate is written next
//! to `--out` as `<out>.partial.json`.
//!
//! `--config FILE` reads `key = value` lines (`#` starts a comment); a key is
//! a long flag name with `_` or `-` (`lambda_count = 20`). Flags given on the
//! command line override the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::experiments::ExperimentConfig;
use crate::hfuncs::{self, HFunction};
use crate::tggm::{self, BlockQuadratic, FitOptions, FitResult, FitResultJson, PathResult};
use crate::truncated_normal::{self, SamplerMethod, SamplerOptions, TnParams};
use crate::univariate::{self, Target};
use crate::{io, oracle};

#[derive(Parser, Debug)]
#[command(name = "hscore", version, about = "Generalized h-score matching for non-negative data and truncated Gaussian graphical models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a sample from a truncated normal distribution (CSV).
    Sample(SampleArgs),
    /// Fit a regularized truncated GGM at one λ (FitResult JSON).
    Fit(FitArgs),
    /// Fit a whole regularization path with eBIC scores.
    Path(PathArgs),
    /// Pick λ on a path by eBIC and report the chosen estimate.
    Select(PathArgs),
    /// Run the graph-recovery ROC simulation.
    Experiment(ExperimentArgs),
    /// Univariate asymptotic variance and efficiency curves (CSV).
    EffCurves(EffCurvesArgs),
    /// Check weight functions against the estimator's conditions.
    ValidateH(ValidateHArgs),
    /// Monte Carlo estimates of the support-recovery constants.
    Diagnostics(DiagnosticsArgs),
    /// Run the numerical self-checks.
    #[command(hide = true)]
    VerifyOracles(OracleArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Worker threads (defaults to the number of cores); results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Config file of `key = value` lines; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_real_or_inf(s: &str) -> std::result::Result<f64, String> {
    match s.trim() {
        "Inf" | "inf" | "INF" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|_| format!("'{t}' is not a number or Inf")),
    }
}

fn parse_h(s: &str) -> std::result::Result<HFunction, String> {
    s.trim().parse::<HFunction>().map_err(|e| e.to_string())
}

fn parse_f64_list_item(s: &str) -> std::result::Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("'{}' is not a number", s.trim()))
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    /// Dimension (required with `--k id`).
    #[arg(long)]
    pub m: Option<usize>,
    /// `id` for the identity, or a parameter JSON file `{m, K, mu | eta, centered}`.
    #[arg(long, default_value = "id")]
    pub k: String,
    /// Number of observations.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Sampler: auto, rejection or gibbs.
    #[arg(long, default_value = "auto")]
    pub method: SamplerMethod,
    /// Gibbs burn-in sweeps.
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    /// Gibbs sweeps between kept draws.
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    /// Data CSV, one observation per row, header x1..xm.
    #[arg(long)]
    pub data: PathBuf,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Weight function shared by all coordinates.
    #[arg(long, default_value = "min_pow:1:3", value_parser = parse_h)]
    pub h: HFunction,
    /// Centered model (μ = 0); the default.
    #[arg(long, conflicts_with = "non_centered")]
    pub centered: bool,
    /// Non-centered model with canonical mean parameter η.
    #[arg(long)]
    pub non_centered: bool,
    /// Ratio λ_K / λ_η; Inf leaves η unpenalized.
    #[arg(long, default_value = "Inf", value_parser = parse_real_or_inf)]
    pub ratio_k_eta: f64,
    /// Factor applied to the diagonal of Γ before solving.
    #[arg(long, default_value_t = 1.01)]
    pub diag_multiplier: f64,
    /// KKT residual at which coordinate descent stops.
    #[arg(long, default_value = "1e-9")]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_sweeps: usize,
    /// Strong-rule screening (followed by a full KKT check).
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub screening: bool,
    /// Divide columns by their root mean square before fitting; estimates are mapped back.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub scale: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// Penalty level λ ≥ 0 (on the scaled data when --scale is on).
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub est: EstimateArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PathArgs {
    /// Number of log-spaced λ values below λ_max.
    #[arg(long, default_value_t = 50)]
    pub lambda_count: usize,
    /// Explicit strictly decreasing λ grid (comma separated); overrides --lambda-count.
    #[arg(long, value_delimiter = ',', value_parser = parse_f64_list_item)]
    pub lambda: Option<Vec<f64>>,
    /// Score models by eBIC after refitting on their support.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub ebic_refit: bool,
    /// CSV summary `lambda,df,ebic_raw,ebic_refit` (path only).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub est: EstimateArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    /// Number of diagonal blocks of K₀.
    #[arg(long, default_value_t = 2)]
    pub n_blocks: usize,
    /// Probability that a within-block entry of K₀ is zero.
    #[arg(long, default_value_t = 0.2)]
    pub pi: f64,
    #[arg(long, default_value_t = 0.5)]
    pub edge_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub edge_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub min_eigenvalue: f64,
    /// Centered model (the default).
    #[arg(long, conflicts_with = "non_centered")]
    pub centered: bool,
    /// Non-centered model, μ₀ drawn per trial.
    #[arg(long)]
    pub non_centered: bool,
    /// Standard deviation of the entries of μ₀.
    #[arg(long, default_value_t = 0.5)]
    pub mu_sd: f64,
    /// Weight functions to compare (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "pow:2,min_pow:1:3,min_log1p:2", value_parser = parse_h)]
    pub h: Vec<HFunction>,
    /// Ratios λ_K / λ_η to compare (comma separated, Inf allowed); non-centered only.
    #[arg(long, value_delimiter = ',', default_value = "Inf", value_parser = parse_real_or_inf)]
    pub ratio_k_eta: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub lambda_count: usize,
    /// Total number of datasets.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Number of distinct K₀ (must divide --trials).
    #[arg(long, default_value_t = 5)]
    pub matrices: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.01)]
    pub diag_multiplier: f64,
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub scale: bool,
    #[arg(long, default_value = "auto")]
    pub method: SamplerMethod,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[command(flatten)]
    pub common: Common,
}

impl ExperimentArgs {
    pub fn to_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            m: self.m,
            n: self.n,
            n_blocks: self.n_blocks,
            pi: self.pi,
            edge_range: (self.edge_min, self.edge_max),
            min_eigenvalue: self.min_eigenvalue,
            centered: !self.non_centered,
            mu_sd: self.mu_sd,
            h: self.h.clone(),
            ratios: self.ratio_k_eta.clone(),
            lambda_count: self.lambda_count,
            trials: self.trials,
            matrices: self.matrices,
            seed: self.seed,
            diag_multiplier: self.diag_multiplier,
            scale: self.scale,
            sampler: SamplerOptions { method: self.method, burn_in: self.burn_in, thin: self.thin },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TargetArg {
    Mu,
    Sigma2,
}

#[derive(Args, Debug, Clone)]
pub struct EffCurvesArgs {
    /// Parameter being estimated.
    #[arg(long, value_enum, default_value = "mu")]
    pub target: TargetArg,
    /// Known σ² (target mu) or known μ (target sigma2).
    #[arg(long, default_value_t = 1.0)]
    pub known: f64,
    /// True values of the target (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "-2,-1,0,1,2,3", value_parser = parse_f64_list_item, allow_hyphen_values = true)]
    pub grid: Vec<f64>,
    /// Weight functions (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "pow:1,pow:2,min_pow:1:3,min_log1p:1,min_log1p:2", value_parser = parse_h)]
    pub h: Vec<HFunction>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct ValidateHArgs {
    /// Weight functions (comma separated).
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_h)]
    pub h: Vec<HFunction>,
    /// Report file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct DiagnosticsArgs {
    /// Parameter JSON file `{m, K, mu | eta, centered}`.
    #[arg(long)]
    pub k: PathBuf,
    #[arg(long, default_value = "min_pow:1:3", value_parser = parse_h)]
    pub h: HFunction,
    /// Monte Carlo sample size for Γ₀.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output JSON (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// Data CSV for the data-dependent check (skipped when absent or empty).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Added to every entry of Γ to check that faults are caught.
    #[arg(long, default_value_t = 0.0, hide = true)]
    pub perturb_gamma: f64,
    #[command(flatten)]
    pub common: Common,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Sample(a) => &a.common,
            Command::Fit(a) => &a.est.common,
            Command::Path(a) | Command::Select(a) => &a.est.common,
            Command::Experiment(a) => &a.common,
            Command::EffCurves(a) => &a.common,
            Command::ValidateH(a) => &a.common,
            Command::Diagnostics(a) => &a.common,
            Command::VerifyOracles(a) => &a.common,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse_with_config(argv) {
        Ok(cli) => cli,
        Err(Failure::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
        Err(Failure::Run(e)) => return report(&e),
    };
    let outcome = match cli.command.common().threads {
        Some(0) => Err(Error::Domain("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Domain(format!("--threads: {e}")))
            .and_then(|pool| pool.install(|| run(&cli.command))),
        None => run(&cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    if e.is_numeric() {
        2
    } else {
        1
    }
}

enum Failure {
    Clap(clap::Error),
    Run(Error),
}

/// Parses once to learn the verb and which flags were given, appends the
/// config-file settings that the command line leaves unset, and parses again.
fn parse_with_config(mut argv: Vec<OsString>) -> std::result::Result<Cli, Failure> {
    let matches = Cli::command().try_get_matches_from(argv.clone()).map_err(Failure::Clap)?;
    let (verb, sub) = matches.subcommand().expect("a subcommand is required");
    let Some(path) = sub.get_one::<PathBuf>("config").cloned() else {
        return Cli::from_arg_matches(&matches).map_err(Failure::Clap);
    };
    let text = std::fs::read_to_string(&path).map_err(|source| Failure::Run(Error::Io { path: path.clone(), source }))?;
    let cmd = Cli::command();
    let sub_cmd = cmd.find_subcommand(verb).expect("verb was just parsed");
    let given = |id: &str| sub.value_source(id) == Some(ValueSource::CommandLine);
    let bad = |line: usize, msg: String| Failure::Run(Error::File { path: path.clone(), message: format!("line {line}: {msg}") });
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| bad(i + 1, "expected 'key = value'".into()))?;
        let (key, value) = (key.trim().replace('-', "_"), value.trim());
        if key == "centered" {
            if given("centered") || given("non_centered") {
                continue;
            }
            if sub_cmd.get_arguments().all(|a| a.get_id() != "centered") {
                return Err(bad(i + 1, format!("'centered' is not an option of '{verb}'")));
            }
            match value {
                "true" => argv.push("--centered".into()),
                "false" => argv.push("--non-centered".into()),
                _ => return Err(bad(i + 1, format!("centered: '{value}' is not true or false"))),
            }
            continue;
        }
        let Some(arg) = sub_cmd.get_arguments().find(|a| a.get_id() == key.as_str() && a.get_long().is_some()) else {
            return Err(bad(i + 1, format!("'{key}' is not an option of '{verb}'")));
        };
        if key == "config" {
            return Err(bad(i + 1, "a config file cannot include another".into()));
        }
        if given(&key) {
            continue;
        }
        let flag = format!("--{}", arg.get_long().expect("checked above"));
        if arg.get_action().takes_values() {
            argv.push(flag.into());
            argv.push(value.into());
        } else {
            match value {
                "true" => argv.push(flag.into()),
                "false" => {}
                _ => return Err(bad(i + 1, format!("{key}: '{value}' is not true or false"))),
            }
        }
    }
    Cli::try_parse_from(argv).map_err(Failure::Clap)
}

/// Prefixes a non-numeric error with the flag it came from.
fn flagged(flag: &str, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{flag}: {m}")),
        Error::Parse(m) => Error::Parse(format!("{flag}: {m}")),
        other => other,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn partial_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".partial.json");
    out.with_file_name(name)
}

/// Writes the last iterate of a non-converged fit next to `out`.
fn keep_partial(out: Option<&Path>, e: Error, scales: Option<&DVector<f64>>) -> Error {
    if let Error::NonConvergence { last_iterate, .. } = &e {
        let fit = match scales {
            Some(s) => tggm::unscale_fit(last_iterate, s),
            None => (**last_iterate).clone(),
        };
        match out {
            Some(p) => {
                let pp = partial_path(p);
                match io::write_atomic(&pp, fit.to_json().as_bytes()) {
                    Ok(()) => eprintln!("partial result written to {}", pp.display()),
                    Err(w) => eprintln!("could not write partial result: {w}"),
                }
            }
            None => eprintln!("last iterate:\n{}", fit.to_json()),
        }
    }
    e
}

fn run(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Sample(a) => run_sample(a),
        Command::Fit(a) => run_fit(a),
        Command::Path(a) => run_path(a, false),
        Command::Select(a) => run_path(a, true),
        Command::Experiment(a) => run_experiment(a),
        Command::EffCurves(a) => run_eff_curves(a),
        Command::ValidateH(a) => run_validate_h(a),
        Command::Diagnostics(a) => run_diagnostics(a),
        Command::VerifyOracles(a) => run_oracles(a),
    }
}

fn load_params(spec: &str, m: Option<usize>) -> Result<TnParams> {
    if spec == "id" {
        let m = m.ok_or_else(|| Error::Domain("--m is required with --k id".into()))?;
        if m == 0 {
            return Err(Error::Domain("--m must be at least 1".into()));
        }
        return TnParams::centered(DMatrix::identity(m, m));
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let p = TnParams::from_json(&text).map_err(|e| Error::File { path: path.to_path_buf(), message: e.to_string() })?;
    if let Some(m) = m {
        if m != p.dim() {
            return Err(Error::Domain(format!("--m {m} disagrees with the {}-dimensional parameters in {spec}", p.dim())));
        }
    }
    Ok(p)
}

fn run_sample(a: &SampleArgs) -> Result<i32> {
    let p = load_params(&a.k, a.m).map_err(|e| flagged("--k", e))?;
    let opts = SamplerOptions { method: a.method, burn_in: a.burn_in, thin: a.thin };
    let s = truncated_normal::sample(&p, a.n, a.seed, &opts).map_err(|e| flagged("--n", e))?;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    emit(a.out.as_deref(), &io::matrix_to_csv(&s.data))?;
    Ok(0)
}

/// Data, scales and the raw quadratic for an estimation command.
struct Prepared {
    q: BlockQuadratic,
    scales: Option<DVector<f64>>,
}

fn prepare(a: &EstimateArgs) -> Result<Prepared> {
    let data = io::read_matrix_csv(&a.data)?;
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::File { path: a.data.clone(), message: "no observations".into() });
    }
    io::check_nonnegative(&data).map_err(|e| match e {
        Error::Domain(m) => Error::File { path: a.data.clone(), message: m },
        other => other,
    })?;
    let scales = if a.scale { Some(tggm::column_scales(&data)?) } else { None };
    let x = match &scales {
        Some(s) => tggm::scale_columns(&data, s),
        None => data,
    };
    let h = hfuncs::shared(&a.h, x.ncols());
    let q = if a.non_centered { tggm::assemble_noncentered(&x, &h)? } else { tggm::assemble_centered(&x, &h)? };
    Ok(Prepared { q, scales })
}

fn fit_options(a: &EstimateArgs) -> FitOptions {
    FitOptions {
        diag_multiplier: a.diag_multiplier,
        ratio: a.ratio_k_eta,
        tol: a.tol,
        max_sweeps: a.max_sweeps,
        screening: a.screening,
        track_objective: false,
    }
}

fn fit_json(fit: &FitResult, scales: Option<&DVector<f64>>, extra: &[(&str, Value)]) -> String {
    let shown = match scales {
        Some(s) => tggm::unscale_fit(fit, s),
        None => fit.clone(),
    };
    let mut v = serde_json::to_value(FitResultJson::from(&shown)).expect("plain data serializes");
    let obj = v.as_object_mut().expect("fit serializes to an object");
    if let Some(s) = scales {
        obj.insert("scales".into(), json!(s.iter().copied().collect::<Vec<f64>>()));
    }
    for (k, val) in extra {
        obj.insert((*k).into(), val.clone());
    }
    let mut text = serde_json::to_string_pretty(&v).expect("plain data serializes");
    text.push('\n');
    text
}

fn run_fit(a: &FitArgs) -> Result<i32> {
    let prep = prepare(&a.est)?;
    let fit = tggm::fit_regularized(&prep.q, a.lambda, &fit_options(&a.est))
        .map_err(|e| keep_partial(a.est.out.as_deref(), flagged("--lambda", e), prep.scales.as_ref()))?;
    emit(a.est.out.as_deref(), &fit_json(&fit, prep.scales.as_ref(), &[]))?;
    Ok(0)
}

fn unscale_path(path: &PathResult, scales: &DVector<f64>) -> PathResult {
    PathResult {
        fits: path.fits.iter().map(|f| tggm::unscale_fit(f, scales)).collect(),
        refits: path.refits.iter().map(|r| r.as_ref().map(|f| tggm::unscale_fit(f, scales))).collect(),
        ..path.clone()
    }
}

fn run_path(a: &PathArgs, select: bool) -> Result<i32> {
    let prep = prepare(&a.est)?;
    let opts = fit_options(&a.est);
    let path = tggm::solution_path(&prep.q, a.lambda.as_deref(), a.lambda_count, &opts)
        .map_err(|e| keep_partial(a.est.out.as_deref(), flagged("--lambda", e), prep.scales.as_ref()))?;
    if !select {
        let shown = match &prep.scales {
            Some(s) => unscale_path(&path, s),
            None => path.clone(),
        };
        let mut text = shown.to_json();
        text.push('\n');
        emit(a.est.out.as_deref(), &text)?;
        if let Some(p) = &a.summary {
            io::write_atomic(p, path.summary_csv().as_bytes())?;
        }
        return Ok(0);
    }
    let idx = tggm::select_index(&path, a.ebic_refit)
        .ok_or_else(|| Error::Degenerate("no grid point has a finite eBIC score".into()))?;
    let chosen = if a.ebic_refit {
        let mut r = path.refits[idx].clone().expect("finite refit score implies a refit");
        r.lambda = path.lambdas[idx];
        r
    } else {
        path.fits[idx].clone()
    };
    let score = if a.ebic_refit { path.ebic_refit[idx].expect("selected score exists") } else { path.ebic_raw[idx] };
    let extra = [("ebic", json!(score)), ("refit", json!(a.ebic_refit)), ("grid_index", json!(idx))];
    emit(a.est.out.as_deref(), &fit_json(&chosen, prep.scales.as_ref(), &extra))?;
    Ok(0)
}

fn run_experiment(a: &ExperimentArgs) -> Result<i32> {
    let config = a.to_config();
    let summary = crate::experiments::run_experiment(&config)?;
    summary.write(&a.out)?;
    for t in summary.trials.iter().filter(|t| t.error.is_some()) {
        eprintln!("warning: trial {} ({}) failed: {}", t.trial, t.method, t.error.as_deref().unwrap_or_default());
    }
    print!("{}", summary.auc_csv());
    Ok(0)
}

fn run_eff_curves(a: &EffCurvesArgs) -> Result<i32> {
    let target = match a.target {
        TargetArg::Mu => Target::Mu,
        TargetArg::Sigma2 => Target::Sigma2,
    };
    let rows = univariate::efficiency_curve(target, a.known, &a.grid, &a.h).map_err(|e| flagged("--known/--grid", e))?;
    emit(a.out.as_deref(), &univariate::efficiency_csv(&rows))?;
    Ok(0)
}

fn run_validate_h(a: &ValidateHArgs) -> Result<i32> {
    let mut text = String::new();
    let mut failed = Vec::new();
    for h in &a.h {
        let report = h.validate();
        text.push_str(&format!("{h}\n{report}\n"));
        if !report.is_ok() {
            failed.push(h.to_string());
        }
    }
    emit(a.out.as_deref(), &text)?;
    if failed.is_empty() {
        Ok(0)
    } else {
        Err(Error::Domain(format!("--h: {} fails the required conditions", failed.join(", "))))
    }
}

fn run_diagnostics(a: &DiagnosticsArgs) -> Result<i32> {
    let spec = a.k.to_string_lossy();
    let p = load_params(&spec, None).map_err(|e| flagged("--k", e))?;
    let mu = if p.is_centered() { None } else { Some(p.mu()) };
    let h = hfuncs::shared(&a.h, p.dim());
    let d = tggm::diagnostics(p.k(), mu.as_ref(), &h, a.mc_n, a.seed)?;
    let mut v = serde_json::to_value(&d).expect("plain data serializes");
    v["s0"] = json!(d.s0.iter().map(|&(i, j)| [i + 1, j + 1]).collect::<Vec<_>>());
    let mut text = serde_json::to_string_pretty(&v).expect("plain data serializes");
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

fn run_oracles(a: &OracleArgs) -> Result<i32> {
    let data = match &a.data {
        Some(p) => Some(io::read_matrix_csv(p)?),
        None => None,
    };
    let checks = oracle::verify_oracles(data.as_ref(), a.perturb_gamma)?;
    for c in &checks {
        println!("{c}");
    }
    Ok(if checks.iter().any(|c| c.outcome == oracle::Outcome::Fail) { 2 } else { 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("hscore").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn experiment_flag_defaults_match_library_defaults() {
        let Command::Experiment(a) = parse(&["experiment", "--out", "x"]).command else { panic!() };
        let c = a.to_config();
        let d = ExperimentConfig::default();
        assert_eq!((c.m, c.n, c.n_blocks, c.trials, c.matrices, c.lambda_count, c.seed), (d.m, d.n, d.n_blocks, d.trials, d.matrices, d.lambda_count, d.seed));
        assert_eq!((c.pi, c.edge_range, c.min_eigenvalue, c.mu_sd, c.diag_multiplier), (d.pi, d.edge_range, d.min_eigenvalue, d.mu_sd, d.diag_multiplier));
        assert_eq!((c.centered, c.scale, c.sampler.burn_in, c.sampler.thin), (d.centered, d.scale, d.sampler.burn_in, d.sampler.thin));
        assert_eq!(c.h.iter().map(|h| h.to_string()).collect::<Vec<_>>(), d.h.iter().map(|h| h.to_string()).collect::<Vec<_>>());
        assert_eq!(c.ratios, d.ratios);
    }

    #[test]
    fn fit_flag_defaults_match_solver_defaults() {
        let Command::Fit(a) = parse(&["fit", "--data", "d.csv", "--lambda", "0.1"]).command else { panic!() };
        let o = fit_options(&a.est);
        let d = FitOptions::default();
        assert_eq!((o.diag_multiplier, o.ratio, o.tol, o.max_sweeps, o.screening), (d.diag_multiplier, d.ratio, d.tol, d.max_sweeps, d.screening));
        assert!(a.est.scale && !a.est.non_centered);
    }

    #[test]
    fn boolean_flags_accept_bare_and_explicit_forms() {
        let Command::Path(a) = parse(&["path", "--data", "d.csv", "--scale", "false", "--ebic-refit"]).command else { panic!() };
        assert!(!a.est.scale && a.ebic_refit);
        let Command::Path(a) = parse(&["path", "--data", "d.csv", "--lambda", "0.3,0.2,0.1", "--ratio-k-eta", "2"]).command else { panic!() };
        assert_eq!(a.lambda, Some(vec![0.3, 0.2, 0.1]));
        assert_eq!(a.est.ratio_k_eta, 2.0);
    }

    #[test]
    fn config_values_yield_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "# path settings\nlambda_count = 7\ndiag-multiplier = 1.5\ncentered = false\nscale = false\n").unwrap();
        let argv: Vec<OsString> = ["hscore", "path", "--data", "d.csv", "--diag-multiplier", "1.2", "--config", cfg.to_str().unwrap()]
            .iter()
            .map(OsString::from)
            .collect();
        let Ok(cli) = parse_with_config(argv) else { panic!() };
        let Command::Path(a) = cli.command else { panic!() };
        assert_eq!(a.lambda_count, 7);
        assert_eq!(a.est.diag_multiplier, 1.2);
        assert!(a.est.non_centered && !a.est.scale);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "bogus = 1\n").unwrap();
        let argv: Vec<OsString> =
            ["hscore", "fit", "--data", "d.csv", "--lambda", "1", "--config", cfg.to_str().unwrap()].iter().map(OsString::from).collect();
        assert!(matches!(parse_with_config(argv), Err(Failure::Run(Error::File { .. }))));
    }

    #[test]
    fn partial_file_name() {
        assert_eq!(partial_path(Path::new("/tmp/fit.json")), PathBuf::from("/tmp/fit.json.partial.json"));
    }

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
