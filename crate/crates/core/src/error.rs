use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column {column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}, column {column}: unknown label `{name}`")]
    UnknownLabel {
        line: usize,
        column: usize,
        name: String,
    },

    #[error("line {line}: label `{name}` appears more than once on the same side of a rule")]
    DuplicateLiteral { line: usize, name: String },

    #[error("line {line}, column {column}: rule weight must be positive, got {value}")]
    NonPositiveWeight {
        line: usize,
        column: usize,
        value: String,
    },

    #[error("line {line}: rule has an empty antecedent")]
    EmptyAntecedent { line: usize },

    #[error("invalid label vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("{what} must be binary (0 or 1)")]
    NonBinary { what: &'static str },

    #[error("probability {value} at index {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("no supervision: every target entry is masked out")]
    NoSupervision,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}", dataset_message(*.line, .message))]
    Dataset {
        line: Option<usize>,
        message: String,
    },

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("dataset carries no noise record (flips)")]
    MissingFlips,

    #[error("dataset already carries injected noise")]
    PriorNoise,

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn dataset_message(line: Option<usize>, message: &str) -> String {
    match line {
        Some(line) => format!("dataset line {line}: {message}"),
        None => format!("dataset: {message}"),
    }
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed user input (rules, data, config)
    /// rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
