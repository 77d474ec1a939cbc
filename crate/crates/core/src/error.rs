use thiserror::Error;

/// Errors raised by the kernel library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside the domain of an operation (bad dimension, y <= 0, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point or value that cannot be represented in the requested chart.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature hit its subdivision limit before meeting tolerance.
    #[error("quadrature did not converge: value {value:e}, error estimate {err_est:e} after {subdivisions} subdivisions")]
    NonConvergence {
        value: f64,
        err_est: f64,
        subdivisions: usize,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn is_nonconvergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
