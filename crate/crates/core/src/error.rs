use thiserror::Error;

/// Errors produced by the discovery, identification and control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The integrated state blew past the overflow guard.
    #[error("trajectory diverged at t = {time} (|x| = {norm:.3e} exceeds guard {guard:.1e})")]
    Divergence { time: f64, norm: f64, guard: f64 },

    /// Data does not constrain the dictionary (all singular values under threshold).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The stacked actuation regressor is rank deficient.
    #[error("control matrix unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
