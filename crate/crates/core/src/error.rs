use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record violated the corpus format or a record invariant.
    #[error("record `{record}`, field `{field}`: {message}")]
    Record {
        record: String,
        field: String,
        message: String,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite activations in layer `{layer}`")]
    NonFinite { layer: String },

    #[error("infeasible for CTC: {0}")]
    Infeasible(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(
        record: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Record {
            record: record.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    /// True when the error stems from bad user input (data or arguments) rather
    /// than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Record { .. }
                | Error::Parse { .. }
                | Error::InvalidArgument(_)
                | Error::Json(_)
                | Error::Infeasible(_)
                | Error::Checkpoint(_)
        )
    }
}
