use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by estimators, samplers and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation (negative data, bad parameters).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed identifiers, config values or file contents.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("non-finite value at sample {sample}, coordinate {coord}: {what}")]
    NonFinite {
        sample: usize,
        coord: usize,
        what: String,
    },

    /// A linear system was singular or too badly conditioned to trust.
    #[error("ill-conditioned system (condition number {condition:.3e}): {advice}")]
    IllConditioned { condition: f64, advice: String },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// Coordinate descent ran out of sweeps; the last iterate is kept.
    #[error("no convergence after {sweeps} sweeps (KKT residual {kkt_residual:.3e})")]
    NonConvergence {
        sweeps: usize,
        kkt_residual: f64,
        last_iterate: Box<crate::tggm::FitResult>,
    },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad user input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::IllConditioned { .. }
                | Error::Degenerate(_)
                | Error::NonConvergence { .. }
                | Error::Sampler(_)
                | Error::Quadrature(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
