use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the refinement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?} ({context})")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("training diverged ({context}): {reason}")]
    TrainingDivergence { context: String, reason: String },

    #[error("insufficient samples: requested {requested}, available {available} (short by {})", requested - available)]
    InsufficientSamples { requested: usize, available: usize },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("image: {0}")]
    Image(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
