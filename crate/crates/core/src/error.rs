use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("invalid codeword: chip pair {pair:?} at payload position {index}")]
    InvalidCodeword { pair: [bool; 2], index: usize },

    #[error("no valid start symbol found in {len} chips")]
    Sync { len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular geometry: {0}")]
    Singular(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("orientation unknown: {0}")]
    OrientationUnknown(String),

    #[error("scan error: no LEDs decoded")]
    EmptyScan,

    #[error("navigation did not converge after {steps} macro-steps")]
    NonConvergence { steps: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
