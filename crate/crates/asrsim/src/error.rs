use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("dialogue {id:?}: {message}")]
    Dialogue { id: String, message: String },

    #[error("alignment indices do not match the provided token sequences: {0}")]
    InvalidAlignment(String),

    #[error("empty model")]
    EmptyModel,

    #[error("corpus structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported model file version {0}")]
    ModelVersion(u32),

    #[error("prediction references unknown dialogue id {0:?}")]
    UnknownDialogue(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
