use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: field `{field}`: {message}")]
    MalformedRow {
        row: usize,
        field: String,
        message: String,
    },

    #[error("row {row}: unknown event id `{event_id}`")]
    UnknownEvent { row: usize, event_id: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid calendar: {0}")]
    Calendar(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("record {0} has no true amount")]
    MissingTrueAmount(usize),

    #[error("fixed-effect absorption did not converge after {sweeps} sweeps (max change {achieved:e})")]
    NonConvergence { sweeps: usize, achieved: f64 },

    #[error("rank deficient design: {0}")]
    RankDeficient(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("covariance not identified: {0}")]
    SingleCluster(String),

    #[error("not identified: {0}")]
    Unidentified(String),

    #[error("probability {probability} outside [0, 1] at {cell}")]
    ProbabilityOutOfRange { probability: f64, cell: String },

    #[error("anomaly injection: {0}")]
    Injection(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
