//! Numerical diagnostics for unconditional basisness of quasi-exponentials.
//!
//! The crate discretizes a quasinilpotent Volterra operator `B` on `[0, a]`,
//! perturbs it by a rank-one term `K = B + (·, f) g`, and studies `A = K⁻¹`
//! through its Fredholm determinant `φ(z) = 1 - z (g(z), f)`. On top of the model
//! it computes the spectrum, the real-line weights `w²`, `w*²`, `W²`, their
//! Muckenhoupt constants, the Carleson constant of the spectrum, Gram frame
//! bounds of the eigenfunction families, and the weighted resolvent estimates.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod detfun;
pub mod error;
pub mod exec;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod weights;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub(crate) fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Outcome of a single check in a diagnostics report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Stable,
    Growing,
    Degenerating,
    Fail,
    NotApplicable,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Stable => "stable",
            Verdict::Growing => "growing",
            Verdict::Degenerating => "degenerating",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "not-applicable",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
