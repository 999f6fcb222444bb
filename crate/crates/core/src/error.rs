use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("unknown {kind} `{name}`")]
    UnknownSpec { kind: &'static str, name: String },

    #[error("exponent violates the admissible range [1/2, 1]: {0}")]
    HypothesisViolation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("t = {0} is not a node of the time grid")]
    NotOnGrid(f64),

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("path {path}: {source}")]
    Path {
        path: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0} is not applicable to this model")]
    NotApplicable(&'static str),

    #[error("batch of {requested} increments exceeds the in-memory limit of {limit}")]
    ResourceLimit { requested: u128, limit: u128 },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }

    /// True for failures of the arithmetic itself (overflow, NaN) rather
    /// than of the inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::Path { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
