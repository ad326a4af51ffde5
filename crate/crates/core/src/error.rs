use std::io;

use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum FellerError {
    #[error("domain error in {what}: argument {value} is outside the admissible range")]
    Domain { what: &'static str, value: f64 },

    #[error("{what} did not converge within {terms} terms")]
    NonConvergence { what: &'static str, terms: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate mass grid: cell {index} carries no probability (dP = {dp:e}); resample the initial condition")]
    DegenerateGrid { index: usize, dp: f64 },

    #[error("node ordering violated between nodes {index} and {} at t = {t}", index + 1)]
    OrderingViolation { index: usize, t: f64 },

    #[error("step size fell below dt_min = {dt_min:e} at t = {t}")]
    StepSizeUnderflow { t: f64, dt_min: f64 },

    #[error("cumulative distribution stays below 1 - {tail_tol:e} on [0, {searched}]")]
    TailNotReached { tail_tol: f64, searched: f64 },

    #[error(
        "truncated domain invalidated: mass {mass:e} in the last 5% of [0, {length}] at t = {t}"
    )]
    TruncationInvalid { mass: f64, length: f64, t: f64 },

    #[error("the two density curves do not overlap")]
    EmptyOverlap,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = FellerError> = std::result::Result<T, E>;

impl FellerError {
    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        FellerError::Domain { what, value }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        FellerError::InvalidConfig(msg.into())
    }
}
