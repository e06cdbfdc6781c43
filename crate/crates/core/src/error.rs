use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A document or value violated a schema or model invariant. `path` names
    /// the offending field, e.g. `entries[0].r0_ohm`.
    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    /// A CSV row could not be ingested. `row` is the 1-based data row
    /// (the header is not counted); 0 means the header itself.
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("no current step of at least {threshold_a} A found")]
    NoStep { threshold_a: f64 },

    #[error("fit did not converge after {iterations} iterations (best residual {best_residual_v:.3e} V RMS)")]
    FitFailure { iterations: usize, best_residual_v: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Innovation variance was not positive. `row` is the telemetry index when
    /// raised from a full run.
    #[error("degenerate measurement update at row {row:?}: innovation variance {variance:e}")]
    DegenerateUpdate { row: Option<usize>, variance: f64 },

    #[error("trace has no ground-truth column")]
    MissingTruth,
}

/// Coarse error class, used for process exit codes and greppable messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Config,
    Io,
    Numerical,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Config => "config",
            ErrorCategory::Io => "io",
            ErrorCategory::Numerical => "numerical",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation | ErrorCategory::Config => 1,
            ErrorCategory::Io => 2,
            ErrorCategory::Numerical => 3,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Config(_) => ErrorCategory::Config,
            Error::FitFailure { .. } | Error::DegenerateFit(_) | Error::DegenerateUpdate { .. } => {
                ErrorCategory::Numerical
            }
            Error::InvalidInput(_)
            | Error::Validation { .. }
            | Error::Parse { .. }
            | Error::NoStep { .. }
            | Error::InsufficientData(_)
            | Error::InvalidData(_)
            | Error::MissingTruth => ErrorCategory::Validation,
        }
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite, got {value}")))
    }
}
