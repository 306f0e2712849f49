use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression matrix has nonzero diagonal entry {value} at index {index}")]
    NonzeroDiagonal { index: usize, value: f64 },

    #[error("infeasible rank: need {required} independent directions, only {available} available (q = {q})")]
    InfeasibleRank {
        required: usize,
        available: usize,
        q: usize,
    },

    #[error("base point is off the manifold: relative residual {0:e}")]
    OffManifold(f64),

    #[error("retraction is rank deficient: sigma_r / sigma_1 = {0:e}")]
    RankDeficientStep(f64),

    #[error("no sufficient decrease after {0} backtracking trials")]
    BacktrackExhausted(usize),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("degenerate draw: {0}")]
    DegenerateDraw(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_error(expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        expected: format!("{}x{}", expected.0, expected.1),
        got: format!("{}x{}", got.0, got.1),
    }
}
