use thiserror::Error;

/// Errors raised by the library. Solver failures carry enough context to
/// identify what did not converge.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("host index {index} out of range for {host_count} hosts")]
    IndexOutOfRange { index: usize, host_count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fields live on different domains")]
    DomainMismatch,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("principal eigenvector lost positivity ({negative} non-positive entries)")]
    PositivityLost { negative: usize },

    #[error("refinement ladder exhausted after {levels} levels (last change {last_change:.3e})")]
    LadderExhausted { levels: usize, last_change: f64 },

    #[error("time step {dt} violates the stability cap (dt * rate = {product:.3} > 0.5)")]
    StabilityCap { dt: f64, product: f64 },

    #[error("candidate is not normalised (sum of squared norms = {norm_sq})")]
    NotNormalised { norm_sq: f64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("solver failed at grid point ({a1}, {a2}): {source}")]
    GridPoint {
        a1: f64,
        a2: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}
