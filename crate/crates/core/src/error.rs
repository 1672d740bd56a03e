use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("duplicate cell ({country}, {year}, {variable})")]
    DuplicateCell {
        country: String,
        year: i32,
        variable: String,
    },

    #[error("variable {variable} has a gap for country {country} (missing in {year} between observed years)")]
    NonContiguous {
        country: String,
        variable: String,
        year: i32,
    },

    #[error("unknown variable: {0}")]
    UnknownVariable(String),

    #[error("variable already exists: {0}")]
    NameCollision(String),

    #[error("empty result: {0}")]
    EmptySample(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("non-convergence after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("estimation failed: {0}")]
    Estimation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
