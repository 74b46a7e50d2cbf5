use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("value outside model domain: {0}")]
    Domain(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("insufficient pairs: need at least {needed}, got {got}")]
    InsufficientPairs { needed: usize, got: usize },

    #[error("no consensus: best model has {inliers} inliers")]
    NoConsensus { inliers: usize },

    #[error("calibration did not converge: final rmse {final_rmse:.6} m, initial rmse {initial_rmse:.6} m")]
    NonConvergence { final_rmse: f64, initial_rmse: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-positive size at pixel ({row}, {col})")]
    NonPositiveSize { row: usize, col: usize },

    #[error("class probabilities not normalized at pixel ({row}, {col}): sum {sum}")]
    NotNormalized { row: usize, col: usize, sum: f64 },

    #[error("pose vector too close to zero to decode")]
    NearZeroVector,

    #[error("pixel ({u:.3}, {v:.3}) is not covered by the localization map")]
    Uncovered { u: f64, v: f64 },

    #[error("pixel ({u:.3}, {v:.3}) is outside the {width}x{height} image")]
    OutOfImage { u: f64, v: f64, width: usize, height: usize },

    #[error("world point ({x:.3}, {y:.3}) is outside camera coverage")]
    OutOfCoverage { x: f64, y: f64 },

    #[error("covariance is not symmetric positive-definite")]
    NonSpd,

    #[error("timestamp {got} precedes previous timestamp {last}")]
    TimeRegression { last: f64, got: f64 },

    #[error("duplicate camera position for camera {0}")]
    DuplicatePosition(u32),

    #[error("infeasible vehicle script: {0}")]
    InfeasibleScript(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("runs do not share the same scenario: {0}")]
    ScenarioMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },

    #[error("{stage} failed at frame {frame}: {source}")]
    Stage { stage: &'static str, frame: u64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::Io(_) | Error::Checksum { .. } => ErrorKind::Io,
            Error::Json(_)
            | Error::Csv(_)
            | Error::Parse { .. }
            | Error::InvalidParameter(_)
            | Error::InsufficientPairs { .. }
            | Error::InfeasibleScript(_)
            | Error::DuplicatePosition(_)
            | Error::ScenarioMismatch(_) => ErrorKind::Config,
            _ => ErrorKind::Numerical,
        }
    }
}
