use thiserror::Error;

use crate::fit::FitResult;

/// Errors raised by the estimation kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("hazard interval {k} has no labeled events")]
    EmptyInterval { k: usize },

    #[error("risk counts infeasible at event {event_index}: n0_hat = {n0_hat}, n1_hat = {n1_hat}")]
    Infeasible {
        event_index: usize,
        n0_hat: f64,
        n1_hat: f64,
    },

    #[error("information is singular{}", match k {
        Some(k) => format!(": hazard interval {k} has no finite curvature"),
        None => String::from(" for pi"),
    })]
    SingularInformation { k: Option<usize> },

    #[error("optimizer did not converge after {} iterations (gradient norm {})", .0.iterations, .0.gradient_norm_at_exit)]
    NotConverged(Box<FitResult>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("stratum `{0}` has a positive population share but no labeled respondents")]
    EmptyStratum(String),

    #[error("inconsistent table: {0}")]
    InconsistentTable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
