use thiserror::Error;

/// Errors produced by the inference toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("triangular matrix is singular at diagonal entry {index}")]
    Singular { index: usize },

    #[error("matrix square root would be complex: eigenvalue {eigenvalue:e}")]
    ComplexRoot { eigenvalue: f64 },

    #[error("supplied inverse is inconsistent: max |A*B - I| = {residual:e}")]
    InconsistentInverse { residual: f64 },

    #[error("retraction left the SPD manifold (failed pivot {pivot})")]
    RetractionFailed { pivot: usize },

    #[error("unsupported estimator: {0}")]
    UnsupportedEstimator(String),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("label {value} at row {row} is not 0 or 1")]
    InvalidLabel { row: usize, value: f64 },

    #[error("conditional variance is not finite at index {index}")]
    VarianceNotFinite { index: usize },

    #[error("value {value} at coordinate {index} lies outside the transform support")]
    OutsideSupport { index: usize, value: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite lower bound estimate at iteration {iteration}")]
    NonFiniteLowerBound { iteration: usize },

    #[error("step aborted at iteration {iteration} after {attempts} halvings: {source}")]
    StepAborted {
        iteration: usize,
        attempts: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
