use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate variance: within-class spread below {eps:e}")]
    DegenerateVariance { eps: f64 },

    #[error("pooled covariance is singular even after ridge regularization")]
    SingularCovariance,

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no feature passes the Fisher discriminant pre-selection (FDS > 1)")]
    EmptyPreselection,

    #[error("unknown sensor {0}")]
    UnknownSensor(usize),

    #[error("removing sensor {0} would leave the array empty")]
    LastSensor(usize),

    #[error("a repair session is already active for this classifier")]
    RepairInProgress,

    #[error("no repair session in state {expected}")]
    RepairState { expected: &'static str },

    #[error("reservoir template for sample {sample_index} has no matching repair-pool entry")]
    AlignmentGap { sample_index: usize },

    #[error("replica gains for sensor {sensor} permute the class ordering after {attempts} attempts")]
    OrderingViolation { sensor: usize, attempts: usize },

    #[error("{}:{line}: malformed line: {reason}", path.display())]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{}:{line}: feature index {index} missing", path.display())]
    MissingFeatureIndex {
        path: PathBuf,
        line: usize,
        index: usize,
    },

    #[error("insufficient records: {0}")]
    InsufficientRecords(String),

    #[error("fault schedule out of range: start {start} for a stream of {len} samples")]
    ScheduleOutOfRange { start: usize, len: usize },

    #[error("only {succeeded} of {total} runs succeeded (at least {required} required)")]
    TooManyFailedRuns {
        succeeded: usize,
        total: usize,
        required: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateVariance { .. } => "DegenerateVariance",
            Error::SingularCovariance => "SingularCovariance",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidInput(_) => "InvalidInput",
            Error::EmptyPreselection => "EmptyPreselection",
            Error::UnknownSensor(_) => "UnknownSensor",
            Error::LastSensor(_) => "LastSensor",
            Error::RepairInProgress => "RepairInProgress",
            Error::RepairState { .. } => "RepairState",
            Error::AlignmentGap { .. } => "AlignmentGap",
            Error::OrderingViolation { .. } => "OrderingViolation",
            Error::MalformedLine { .. } => "MalformedLine",
            Error::MissingFeatureIndex { .. } => "MissingFeatureIndex",
            Error::InsufficientRecords(_) => "InsufficientRecords",
            Error::ScheduleOutOfRange { .. } => "ScheduleOutOfRange",
            Error::TooManyFailedRuns { .. } => "TooManyFailedRuns",
            Error::Config(_) => "Config",
            Error::Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
