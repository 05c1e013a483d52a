use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid segment [{a}, {b}] for sequence of length {len}")]
    InvalidSegment { a: usize, b: usize, len: usize },

    #[error("label index {index} out of range for {n_labels} labels")]
    LabelOutOfRange { index: usize, n_labels: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed binary data: {0}")]
    Format(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(
        "conjugate gradient did not converge after {iterations} iterations (residual {residual:e})"
    )]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error(
        "optimizer did not converge after {iterations} iterations (max |grad| {grad_inf_norm:e})"
    )]
    NotConverged {
        iterations: usize,
        grad_inf_norm: f64,
    },

    #[error("example {index}: {source}")]
    Example {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_example(self, index: usize) -> Self {
        match self {
            e @ Error::Example { .. } => e,
            e => Error::Example {
                index,
                source: Box::new(e),
            },
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite(_) | Error::CgNotConverged { .. } | Error::NotConverged { .. } => true,
            Error::Example { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
