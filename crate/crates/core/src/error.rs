use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A broken invariant, reported as data rather than as a failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.rule)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("id-count mismatch: header declares {expected} rows, ids file has {found}")]
    IdCountMismatch { expected: usize, found: usize },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: duplicate image id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("invalid value: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("unknown schema {0:?}")]
    UnknownSchema(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("line {line}: {field} value {value:?} is not in the vocabulary")]
    Vocabulary {
        line: usize,
        field: String,
        value: String,
    },

    #[error("taxonomy line {line}: {message}")]
    Taxonomy { line: usize, message: String },

    #[error("prediction for image {0:?} has no manifest row")]
    UnmatchedImage(String),

    #[error("manifest image {0:?} has no prediction")]
    MissingPrediction(String),

    #[error("{id:?} has conflicting {field} across rows")]
    Conflict { id: String, field: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("k={k} exceeds database size {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("row {id:?} has (near-)zero norm")]
    ZeroNorm { id: String },

    #[error("age {0} is below the youngest band (18)")]
    AgeOutOfRange(u32),

    #[error("income must be positive, got {0}")]
    NonPositiveIncome(f64),

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// I/O failures map to exit code 2; everything else is a validation failure.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
