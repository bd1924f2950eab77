use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature gave up before reaching the requested tolerance.
    #[error(
        "quadrature did not converge on [{lower}, {upper}]: estimate {estimate:e}, \
         error {error:e} after {intervals} subintervals"
    )]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
        intervals: usize,
    },

    /// A numerical procedure produced non-finite or runaway values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The two-point boundary problem for the elementary functions is
    /// degenerate at this time.
    #[error("caustic at t = {t}: boundary-value problem degenerate (nearest zero near t = {nearest_zero})")]
    Caustic { t: f64, nearest_zero: f64 },

    /// Internal consistency check failed.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Configuration could not be parsed or validated.
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
