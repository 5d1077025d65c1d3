use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GleeError>;

#[derive(Debug, Error)]
pub enum GleeError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("index {index} out of range for {what} of size {bound}")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("example {0} has no non-padding tokens")]
    EmptyInput(usize),

    #[error("configuration error ({key}): {reason}")]
    Config { key: String, reason: String },

    #[error("template error: {0}")]
    Template(String),

    #[error("verbalizer error: {0}")]
    Verbalizer(String),

    #[error("input structure error: {0}")]
    InputStructure(String),

    #[error("class {class} has a zero-norm predictor row; cannot normalize with tau={tau}")]
    DegenerateRow { class: usize, tau: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GleeError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        GleeError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        GleeError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        GleeError::Format {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GleeError::Io {
            path: path.into(),
            source,
        }
    }
}
