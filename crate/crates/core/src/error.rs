use std::path::PathBuf;

use diqp_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiqpError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {tensor} has shape {got:?}, expected {want:?}")]
    Shape {
        stage: String,
        tensor: String,
        got: Vec<usize>,
        want: Vec<usize>,
    },

    #[error("{field} = {value} is outside its vocabulary of size {vocab}")]
    OutOfVocab {
        field: &'static str,
        value: usize,
        vocab: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("external codec failed: {0}")]
    Tool(String),

    #[error("numerical failure at step {step}: {what}")]
    Numerical { step: usize, what: String },

    #[error("checkpoint config differs from run config in: {}", .0.join(", "))]
    ConfigMismatch(Vec<String>),

    #[error("{0}")]
    Invalid(String),
}

impl DiqpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DiqpError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        DiqpError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 1 config, 2 environment/IO, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            DiqpError::Io { .. } | DiqpError::Format { .. } | DiqpError::Tool(_) => 2,
            DiqpError::Numerical { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, DiqpError>;
