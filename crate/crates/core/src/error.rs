use std::path::PathBuf;

use thiserror::Error;

use crate::domain::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("invalid survival curve: {0}")]
    InvalidCurve(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no events to split on")]
    NoEvents,

    #[error(
        "monotone likelihood: coefficient for feature {feature} diverges; refit with penalizer > 0"
    )]
    Separation { feature: String },

    #[error("cox fit did not converge: {0}")]
    NotConverged(String),

    #[error("singular information matrix; drop constant features or use penalizer > 0")]
    SingularHessian,

    #[error("feature schema mismatch: missing {missing:?}, extra {extra:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("K = {k} exceeds the size of the {group} group ({size})")]
    NeighborCount {
        k: usize,
        group: &'static str,
        size: usize,
    },

    #[error("treatment feature absent from schema")]
    MissingTreatment,

    #[error("degenerate evaluation set: {0}")]
    DegenerateEvaluation(String),

    #[error("censoring support exhausted at t = {0}")]
    CensoringSupportExhausted(f64),

    #[error("unseen category {value:?} for {field}")]
    UnseenCategory { field: String, value: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset failed validation with {} violation(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Validation(Vec<Violation>),

    #[error("empty cohort: {0}")]
    EmptyCohort(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
