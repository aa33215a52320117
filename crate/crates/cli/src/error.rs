use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Success,
    /// Some attack cells failed; the rest were written.
    PartialFailure {
        failed: usize,
    },
}

impl Completion {
    pub fn exit_code(self) -> i32 {
        match self {
            Completion::Success => 0,
            Completion::PartialFailure { .. } => 2,
        }
    }

    pub fn merge(self, other: Completion) -> Completion {
        match (self, other) {
            (Completion::PartialFailure { failed: a }, Completion::PartialFailure { failed: b }) => {
                Completion::PartialFailure { failed: a + b }
            }
            (p @ Completion::PartialFailure { .. }, _) | (_, p @ Completion::PartialFailure { .. }) => p,
            _ => Completion::Success,
        }
    }
}
