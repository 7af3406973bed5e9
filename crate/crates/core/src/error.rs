use thiserror::Error;

/// Errors raised by the model, sampler and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("log target is not finite at the starting point {0}")]
    NonFiniteTarget(f64),

    #[error("starting point {x0} lies outside ({lower}, {upper})")]
    OutOfSupport { x0: f64, lower: f64, upper: f64 },

    #[error("malformed sticks: {0}")]
    MalformedSticks(String),

    #[error("index {index} out of range (valid 1..={max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("history has length {got}, expected {expected}")]
    HistoryLengthMismatch { expected: usize, got: usize },

    #[error("state {state} out of range for {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },

    #[error("every entry of row {0} underflowed")]
    DegenerateRow(usize),

    #[error("chain has no snapshots")]
    EmptyChain,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no snapshot has {m_hat} active states and order {p_hat}")]
    NoMatchingSnapshots { m_hat: usize, p_hat: usize },

    #[error("trace of length {0} is too short (need at least 100)")]
    TraceTooShort(usize),

    #[error("message table would hold {0} entries")]
    TableTooLarge(usize),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("sampler aborted at iteration {iteration}: {source}")]
    SamplerAbort {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.to_string(),
        reason: reason.into(),
    }
}
