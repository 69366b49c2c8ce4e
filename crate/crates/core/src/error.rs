use std::path::PathBuf;

use thiserror::Error;

use crate::SchedulerKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside [0, 1]")]
    Domain { t: f64 },

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error("integration diverged at step {step} (t = {t})")]
    Diverged { step: usize, t: f64 },

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("scheduler mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: SchedulerKind,
        found: SchedulerKind,
    },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
