use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {row}: {message}")]
    Parse { path: String, row: usize, message: String },

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("parameter `{name}`: lower bound {lower} must be below upper bound {upper}")]
    DegenerateRange { name: String, lower: f64, upper: f64 },

    #[error("parameter `{name}`: default {default} outside [{lower}, {upper}]")]
    DefaultOutOfRange {
        name: String,
        lower: f64,
        upper: f64,
        default: f64,
    },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("simulation diverged after t = {last_finite_time:.4} s")]
    SimulationDiverged { last_finite_time: f64 },

    #[error("log campaign failed: only {stable} of {total} flights were stable")]
    CampaignFailed { stable: usize, total: usize },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("truncated file {path}: {message}")]
    Truncated { path: String, message: String },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no segments available for search")]
    NoSegments,

    #[error("no validation records")]
    NoRecords,

    #[error("artifact {path} does not match its recorded hash")]
    HashMismatch { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
