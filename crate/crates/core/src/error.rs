use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inward normal is undefined at interior point {0:?}")]
    InteriorPoint(Vec<f64>),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("time {t} is beyond the path horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid Levy driver: {0}")]
    InvalidDriver(String),
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("invalid functional: {0}")]
    InvalidFunctional(String),
    /// One of the standing assumptions (A1)-(A4) on the problem data is violated.
    #[error("assumption {assumption} violated: {reason}")]
    Assumption {
        assumption: &'static str,
        reason: String,
    },
    #[error("reflection increment {increment} at a point {distance} away from the boundary")]
    PushAwayFromBoundary { increment: f64, distance: f64 },
    #[error("point {0:?} lies in the closed domain")]
    NotExterior(Vec<f64>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
