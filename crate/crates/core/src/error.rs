use thiserror::Error;

/// Errors raised by the estimation, prediction and planning stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance is not positive semi-definite")]
    NotPsd,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),
    #[error("time {t} outside valid range [0, {t_max}]")]
    OutOfRange { t: f64, t_max: f64 },
    #[error("QP infeasible at SCP iteration {iteration}")]
    ScpInfeasible { iteration: usize },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
