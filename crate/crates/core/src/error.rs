use thiserror::Error;

/// Errors produced by the calibration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("labels required: {0}")]
    LabelsRequired(String),

    #[error("optimization failed: objective is not finite at x = {point}")]
    Optimization { point: f64 },

    #[error("degenerate target: every sample is predicted as class {class}, no distinct-label pairs exist")]
    DegenerateTarget { class: usize },

    #[error("empty filter: no sample has confidence >= {threshold}")]
    EmptyFilter { threshold: f64 },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Training { epoch: usize },

    #[error("data access: method `{method}` requires {requirement}")]
    DataAccess { method: String, requirement: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier, used for machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::LabelsRequired(_) => "labels-required",
            Error::Optimization { .. } => "optimization",
            Error::DegenerateTarget { .. } => "degenerate-target",
            Error::EmptyFilter { .. } => "empty-filter",
            Error::InvalidSpec(_) => "invalid-spec",
            Error::Training { .. } => "training",
            Error::DataAccess { .. } => "data-access",
            Error::SchemaVersion { .. } => "schema-version",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
