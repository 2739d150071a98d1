//! Generalized h-score matching for data on the non-negative orthant.
//!
//! The crate estimates truncated normal models without ever touching their
//! normalizing constant. Modules, bottom up:
//!
//! - [`hfuncs`]: the per-coordinate weight functions `h`.
//! - [`truncated_normal`]: the model, its score, and samplers.
//! - [`expfam`]: generic exponential-family loss, `(Γ, g)` and `Γ⁻¹g`.
//! - [`univariate`]: closed-form one-dimensional estimators and efficiencies.
//! - [`tggm`]: sparse precision matrices with ℓ1 coordinate descent.
//! - [`experiments`]: the simulation harness with ROC/AUC summaries.
//! - [`cli`]: the `hscore` command line.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod expfam;
pub mod hfuncs;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod tggm;
pub mod truncated_normal;
pub mod univariate;

pub use error::{Error, Result};
pub use hfuncs::HFunction;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/h-functions.md")]
    mod h_functions {}
    #[doc = include_str!("../../../book/src/univariate.md")]
    mod univariate {}
    #[doc = include_str!("../../../book/src/score-matching.md")]
    mod score_matching {}
    #[doc = include_str!("../../../book/src/graphical-models.md")]
    mod graphical_models {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
