use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// [`Error::category`] gives a stable, machine-parsable tag for each variant;
/// the CLI prints it in front of the human-readable message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NonSymmetric(f64),
    #[error("iterative solver did not converge: {0}")]
    NoConvergence(String),
    #[error("matrix is not positive definite (smallest eigenvalue {smallest:.3e}, largest {largest:.3e})")]
    NotPositiveDefinite { smallest: f64, largest: f64 },
    #[error("Sylvester pencil is singular (min eigenvalue sum {0:.3e})")]
    SingularPencil(f64),
    #[error("Gram matrix Wz Z Z^T Wz^T is singular beyond ridge repair")]
    SingularGram,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("vocabulary is empty after tokenization")]
    EmptyVocabulary,
    #[error("document for class '{0}' has no in-vocabulary token")]
    AllZeroColumn(String),
    #[error("too few classes: {0}")]
    TooFewClasses(String),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("parse error in {path} at line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("non-finite value in {path} at row {row}, column {col}")]
    NonFiniteValue { path: String, row: usize, col: usize },
    #[error("unknown class '{name}' at line {line}")]
    UnknownClass { name: String, line: usize },
    #[error("schema mismatch: {0}")]
    SchemaVersionMismatch(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::NonSymmetric(_) => "NonSymmetric",
            Error::NoConvergence(_) => "NoConvergence",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::SingularPencil(_) => "SingularPencil",
            Error::SingularGram => "SingularGram",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidInput(_) => "InvalidInput",
            Error::EmptyVocabulary => "EmptyVocabulary",
            Error::AllZeroColumn(_) => "AllZeroColumn",
            Error::TooFewClasses(_) => "TooFewClasses",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::Parse { .. } => "ParseError",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::UnknownClass { .. } => "UnknownClass",
            Error::SchemaVersionMismatch(_) => "SchemaVersionMismatch",
            Error::Io { .. } => "IoError",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}

pub(crate) fn dims(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
