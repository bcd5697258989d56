use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TlrError {
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("labels are required for this operation")]
    MissingLabels,

    #[error("matrix I + B is not positive definite (B is not PSD upstream)")]
    CholeskyFailure,

    #[error("kernel matrix is not positive semidefinite: tr(KL) = {0}")]
    NotPsd(f64),

    #[error("grid has no runnable configuration: {0}")]
    EmptyGrid(String),

    #[error("model format error: {0}")]
    Format(String),
}

pub type Result<T, E = TlrError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> TlrError {
    let path = path.into();
    move |source| TlrError::Io { path, source }
}
