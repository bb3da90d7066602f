//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised while loading scenes, configuring models or evaluating them.
///
/// The variants separate the failure classes that callers are expected to
/// handle differently: malformed input files, inconsistent configuration,
/// violated scene invariants and out-of-domain numerical requests.
#[derive(Debug, Error)]
pub enum Error {
    /// A scene or observation file could not be parsed. Line numbers are 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Configuration is structurally valid but inconsistent (unknown material,
    /// unconfigured frequency, empty grid, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A scene invariant does not hold (non-unit normal, mixed object classes,
    /// degenerate wall, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical operation was requested outside its domain
    /// (grazing incidence, negative thickness, empty path set, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
