use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric: |m[{row}][{col}] - m[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("matrix is not a correlation matrix: diagonal entry {index} is {value}")]
    NotCorrelation { index: usize, value: f64 },
    #[error("matrix is not positive definite: Cholesky pivot {index} is {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("index {index} is outside 1..={dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("index set {0:?} is not strictly increasing")]
    UnsortedIndexSet(Vec<usize>),
    #[error("index set must not be empty")]
    EmptyIndexSet,
    #[error("the complement of the index set is empty")]
    EmptyComplement,
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("vector a has no strictly positive component")]
    NoPositiveComponent,
    #[error("brute-force oracle found {0} admissible index sets instead of exactly one")]
    OracleAmbiguous(usize),
    #[error("brute-force oracle is limited to k <= 12, got k = {0}")]
    OracleTooLarge(usize),

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid radial shape: N + delta = {0} must be positive")]
    InvalidShape(f64),
    #[error("tail constant p = {supplied} is inconsistent with the canonical radial law (induced p = {induced})")]
    InconsistentP { supplied: f64, induced: f64 },
    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("a threshold of +infinity is not supported")]
    InfiniteThreshold,
    #[error("value is not finite: {0}")]
    NotFinite(f64),

    #[error("normalization violated: ||a_I|| = {0}, expected 1")]
    NormalizationViolated(f64),
    #[error("negative threshold {value} on J-coordinate {index}")]
    NegativeThresholdOnJ { index: usize, value: f64 },
    #[error("precondition violated: {0}")]
    ConditionViolated(String),
    #[error("value {0} is outside the admissible range")]
    OutOfRange(f64),

    #[error("upper order statistic {0} is not positive")]
    NonPositiveOrderStatistic(f64),
    #[error("k_n = {k_n} must satisfy 1 <= k_n < n = {n}")]
    KnTooLarge { k_n: usize, n: usize },
    #[error("all upper order statistics coincide; the log-spacing statistic is zero")]
    DegenerateSpacing,
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("too few exceedances: expected {expected:.1}, need at least {required}")]
    TooFewExceedances { expected: f64, required: usize },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
