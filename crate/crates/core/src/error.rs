use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation failed ({invariant}): {detail}")]
    Validation {
        invariant: &'static str,
        detail: String,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature did not converge (estimated error {estimate:e})")]
    Quadrature { estimate: f64 },
    #[error("exponential fit residual {achieved:e} exceeds tolerance {tolerance:e}")]
    FitResidual { achieved: f64, tolerance: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("index space holds {count} fields, above the cap of {cap}")]
    SizeOverflow { count: usize, cap: usize },
    #[error("non-finite value in field {index} at t = {t}")]
    NonFinite { index: usize, t: f64 },
    #[error("step halving failed at t = {t}: error {error:e} did not drop below {tolerance:e}")]
    StepControl { t: f64, error: f64, tolerance: f64 },
    #[error("trace magnitude {0:e} underflows the logarithm")]
    Underflow(f64),
    #[error("requested order {requested} exceeds available order {available}")]
    Order { requested: usize, available: usize },
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("mode mismatch: {0}")]
    Mode(String),
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}

impl Error {
    pub(crate) fn validation(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Validation {
            invariant,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(detail: impl Into<String>) -> Self {
        Error::Domain(detail.into())
    }
}
