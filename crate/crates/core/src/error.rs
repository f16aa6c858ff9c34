use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Unparseable {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: non-finite value `{value}`")]
    NonFinite {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid constraint: {0}")]
    Constraint(String),

    #[error("threshold {threshold} is not an edge of the {grid} grid of feature {feature}")]
    OffGrid {
        feature: usize,
        threshold: f64,
        grid: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported model format version `{0}`")]
    Version(String),

    #[error("model schema violation: {0}")]
    Schema(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
