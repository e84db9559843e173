use std::path::PathBuf;

use thiserror::Error;

use crate::network::Model;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error category, used by the command-line front end to pick an
/// exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("write error on {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}, step {step}: non-finite loss")]
    Divergence {
        epoch: usize,
        step: usize,
        /// Parameters from the last step whose loss was finite.
        last_good: Box<Model>,
    },
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) => Category::Usage,
            Error::Numeric(_) | Error::Divergence { .. } => Category::Numeric,
            _ => Category::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }
}
