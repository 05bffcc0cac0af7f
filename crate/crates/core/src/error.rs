use thiserror::Error;

/// Errors raised by the boosting, inference and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate outcome: study '{0}' has zero outcome variance")]
    DegenerateOutcome(String),

    #[error("study '{0}' is already standardized")]
    AlreadyStandardized(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank-deficient design: the unpenalized normal equations are singular")]
    RankDeficient,

    #[error("sample too small for AICc: every candidate iteration has tr(B_m) + 2 >= N = {0}")]
    SampleTooSmallForAicc(usize),

    #[error("weights must be nonnegative and sum to one (got sum {0})")]
    InvalidWeights(f64),

    #[error("operator of size {n}x{n} exceeds the configured cap of {cap} rows")]
    OperatorTooLarge { n: usize, cap: usize },

    #[error("selection polyhedron needs {entries} dense entries, above the cap of {cap}")]
    PolyhedronTooLarge { entries: usize, cap: usize },

    #[error("degenerate contrast: v'Σv = {0:e}")]
    DegenerateContrast(f64),

    #[error("numerically empty truncation: standardized interval [{alpha}, {xi}] has no mass")]
    EmptyTruncation { alpha: f64, xi: f64 },

    #[error("asymptote undefined: merged between-study trace is zero")]
    ZeroAsymptoteDenominator,

    #[error("missing value in '{source_name}' at data row {row}, column '{column}'")]
    MissingValue {
        source_name: String,
        row: usize,
        column: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
