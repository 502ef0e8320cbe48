use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::egp::EgpParams;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no common records across series")]
    NoCommonRecords,

    #[error("duplicate timestamp {timestamp} in series {station}")]
    DuplicateTimestamp {
        station: String,
        timestamp: DateTime<Utc>,
    },

    #[error("degenerate split: training frame is empty")]
    DegenerateSplit,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fit did not converge ({reason}); best log-likelihood {loglik}")]
    EgpNonConvergence {
        reason: String,
        best: EgpParams,
        loglik: f64,
    },

    #[error("no convexity changepoint: {0}")]
    NoConvexityChangepoint(String),

    #[error("too few exceedances above threshold: got {got}, need {needed}")]
    TooFewExceedances { got: usize, needed: usize },

    #[error("insufficient data: got {got} rows, need {needed}")]
    InsufficientData { got: usize, needed: usize },

    #[error("frame has no target column")]
    MissingTarget,

    #[error("rank-deficient design matrix: column {column} is collinear")]
    RankDeficient { column: usize },

    #[error("covariate vector is not extreme (no coordinate exceeds its threshold)")]
    NotExtreme,

    #[error("Pareto transform diverges: cdf reached 1 at z = {0}")]
    UpperEndpoint(f64),

    #[error("too few uncensored rows after exponential transform: got {got}, need {needed}")]
    TooFewUncensored { got: usize, needed: usize },

    #[error("all candidate families failed to fit")]
    AllFamiliesFailed,

    #[error("unreachable conditioning point: normalizing constant underflowed")]
    UnreachableConditioningPoint,

    #[error("rejection envelope failure: acceptance rate {acceptance:.2e} below 1e-4")]
    EnvelopeFailure { acceptance: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid interval at index {index}: lo > hi")]
    InvalidInterval { index: usize },

    #[error("model/config mismatch: {0}")]
    ModelMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
