use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("number of sources k={0} is outside the supported range 2..=16")]
    SourceCount(usize),

    #[error("invalid inclusion pattern {0:?}")]
    Pattern(String),

    #[error("count table: {0}")]
    Table(String),

    #[error("model specification: {0}")]
    Model(String),

    #[error("dimension mismatch: table has k={table}, model has k={model}")]
    DimensionMismatch { table: usize, model: usize },

    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("source {0} has an empty margin; the model is not identifiable")]
    ZeroMargin(usize),

    #[error("estimator {estimator} is not available for k={k}{detail}")]
    Unsupported {
        estimator: &'static str,
        k: usize,
        detail: &'static str,
    },

    #[error("scenario {id}: {msg}")]
    Scenario { id: String, msg: String },

    #[error("cell probability solve did not converge for scenario {0}")]
    SolveDiverged(String),

    #[error("every replication of the reference estimator {0} failed")]
    ReferenceFailed(&'static str),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
