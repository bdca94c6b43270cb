use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario, stage, profile or model configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the domain of an operation (e.g. a scale not in the scale set).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error at stage {stage}: {message}")]
    Numeric { stage: usize, message: String },

    #[error("training diverged at step {step}: loss = {loss}")]
    Training { step: usize, loss: f64 },

    #[error("oracle infeasible: {0}")]
    OracleInfeasible(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Comparison(_) | Error::Json(_) => 2,
            Error::Numeric { .. } | Error::Training { .. } | Error::UndefinedMetric(_) => 3,
            Error::OracleInfeasible(_) => 4,
            Error::MissingArtifact(_) | Error::Checkpoint(_) => 5,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}
