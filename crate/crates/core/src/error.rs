use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Point or timestamp outside the configured study box/window.
    #[error("rejected {what}: {detail}")]
    Rejected { what: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Input data that cannot be used (bad header, empty splits, ...).
    #[error("data error{}: {message}", location.as_ref().map(|l| format!(" ({l})")).unwrap_or_default())]
    Data {
        message: String,
        location: Option<String>,
    },

    /// Shapes that do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Failure inside a named pipeline stage.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn data(message: impl Into<String>) -> Self {
        Error::Data {
            message: message.into(),
            location: None,
        }
    }

    pub fn data_at(message: impl Into<String>, location: impl Into<String>) -> Self {
        Error::Data {
            message: message.into(),
            location: Some(location.into()),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Rejected { .. } | Error::Data { .. } | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
            Error::Structural(_) | Error::Checkpoint(_) => 5,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub(crate) fn ensure_dims(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Structural(msg()))
    }
}
