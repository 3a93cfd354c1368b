//! Crate-wide error type with stable categories for CLI reporting.

use std::path::PathBuf;
use thiserror::Error;

/// All failure modes surfaced by the library.
///
/// Each variant maps to a stable category string used by the CLI when
/// printing `error[category]: message` lines.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or out-of-range configuration values, unknown config keys.
    #[error("{0}")]
    Config(String),

    /// A caller violated an API contract (shape mismatch, wrong cardinality,
    /// non-binary mask where a binary one is required, ...).
    #[error("{0}")]
    Contract(String),

    /// Scene parameters outside the renderable regime.
    #[error("{0}")]
    Render(String),

    /// Invalid evaluation protocol (bad fold counts, overlapping subjects...).
    #[error("{0}")]
    Protocol(String),

    /// Training diverged or hit a non-finite loss.
    #[error("{0}")]
    Train(String),

    /// Malformed or incompatible checkpoint file.
    #[error("{0}")]
    Checkpoint(String),

    /// Malformed dataset on disk (missing labels, bad JSON, bad PNG...).
    #[error("{0}")]
    Data(String),

    /// Filesystem failure with the offending path attached.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable category tag for CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Render(_) => "render",
            Error::Protocol(_) => "protocol",
            Error::Train(_) => "train",
            Error::Checkpoint(_) => "checkpoint",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
        }
    }

    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for contract violations.
#[macro_export]
macro_rules! contract {
    ($cond:expr, $($arg:tt)*) => {
        if !($cond) {
            return Err($crate::Error::Contract(format!($($arg)*)));
        }
    };
}
