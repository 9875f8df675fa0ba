// SPDX-License-Identifier: Apache-2.0

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::types::EdgeField;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("stream not sorted on {field}: value {value} follows {previous} (input {input})")]
    Unsorted {
        field: EdgeField,
        input: usize,
        previous: u64,
        value: u64,
    },

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("watchdog timeout after {secs}s waiting for {what}")]
    Deadlock { what: String, secs: u64 },

    #[error("phase order violation: {0}")]
    PhaseOrder(String),

    #[error("data corruption: {0}")]
    Corrupt(String),

    #[error("incomplete run directory: {0}")]
    Incomplete(String),

    #[error("run cancelled after a failure on another node")]
    Cancelled,

    #[error("phase `{phase}` failed on node {node}: {source}")]
    Phase {
        phase: String,
        node: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Name of the failing phase when the error was raised inside one.
    pub fn phase(&self) -> Option<&str> {
        match self {
            Error::Phase { phase, .. } => Some(phase),
            _ => None,
        }
    }

    pub fn is_cancelled(&self) -> bool {
        match self {
            Error::Cancelled => true,
            Error::Phase { source, .. } => source.is_cancelled(),
            _ => false,
        }
    }
}

/// Attaches a path to a raw `io::Error`.
pub(crate) trait IoContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
