use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by samplers, estimators, trainers and data readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sampling distribution: {0}")]
    InvalidDistribution(String),

    #[error("trial count must be at least 1")]
    ZeroTrialCount,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("counts sum to {got}, expected the trial count {expected}")]
    CountSumMismatch { expected: u64, got: u64 },

    #[error("draw has {count} selections at coordinate {index} where the probability is zero")]
    InconsistentDraw { index: usize, count: u64 },

    #[error("drop probability must lie in [0, 1), got {0}")]
    InvalidDropProbability(f64),

    #[error("degenerate distribution: every weight is zero")]
    DegenerateDistribution,

    #[error("expectation diverges: second moment {moment} at coordinate {index} has zero sampling probability")]
    InfiniteExpectation { index: usize, moment: f64 },

    #[error("factor {name} must be positive, got {value}")]
    NonPositiveFactor { name: &'static str, value: f64 },

    #[error("simplex minimization stalled: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: u64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {msg}")]
    MalformedLine {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: bad magic number {got:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        got: u32,
        expected: u32,
    },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
