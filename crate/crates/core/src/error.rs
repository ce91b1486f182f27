//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed query '{query}': {reason}")]
    MalformedQuery { query: String, reason: String },

    #[error("role program '{role}' is ill-formed: {reason}")]
    IllFormedRole { role: String, reason: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown model '{name}'; valid models: {known}")]
    UnknownModel { name: String, known: String },

    #[error("unknown query '{name}'; valid queries: {known}")]
    UnknownQuery { name: String, known: String },

    #[error("unknown builtin scenario '{name}'; valid scenarios: {known}")]
    UnknownScenario { name: String, known: String },

    #[error("trace invalid at entry {index}: {reason}")]
    InvalidTrace { index: usize, reason: String },

    #[error("replay does not support model '{0}'")]
    ReplayUnsupported(String),

    #[error("replay diverged at entry {index}: {reason}")]
    ReplayDivergence { index: usize, reason: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unclassifiable violation: {0}")]
    Unclassifiable(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
