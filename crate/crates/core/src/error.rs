use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ForensicsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ForensicsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    MalformedRow {
        file: String,
        line: u64,
        message: String,
    },

    #[error("{file}: duplicate key {key}")]
    DuplicateKey { file: String, key: String },

    #[error("{file}: unresolved center_id {center_id}")]
    UnresolvedCenter { file: String, center_id: String },

    /// Uniform refusal raised by every detector when `validate` reports violations.
    #[error("dataset failed validation with {count} violation(s); first: {first}")]
    InvalidDataset { count: usize, first: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl ForensicsError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        ForensicsError::InvalidParameter(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        ForensicsError::InsufficientData(msg.into())
    }

    /// True for failures caused by the input data rather than by how the tool was invoked.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            ForensicsError::Io { .. }
                | ForensicsError::MalformedRow { .. }
                | ForensicsError::DuplicateKey { .. }
                | ForensicsError::UnresolvedCenter { .. }
                | ForensicsError::InvalidDataset { .. }
                | ForensicsError::InsufficientData(_)
        )
    }
}
