use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The model document could not be parsed into the expected shape.
    #[error("schema violation: {0}")]
    Schema(String),

    /// One or more model invariants failed; every finding is listed.
    #[error("model validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("premise value {value} outside membership domain [{lo}, {hi}]")]
    OutsideDomain { value: f64, lo: f64, hi: f64 },

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing variable in assignment: {0}")]
    MissingVariable(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("filter extraction failed: {0}")]
    Extraction(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("verification error: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
