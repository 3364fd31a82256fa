use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The document is not well-formed for the expected schema.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Cross-references inside or between documents do not line up.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A value is outside its permitted range.
    #[error("range error: {0}")]
    Range(String),

    /// Invalid or inconsistent run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The synthetic layout cannot fit the requested teeth.
    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
