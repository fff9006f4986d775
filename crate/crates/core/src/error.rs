//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimension mismatch in tensor/matrix operations, and any
    /// other configuration inconsistency detected after parsing.
    #[error("shape error: {0}")]
    Shape(String),

    /// Text-config parse failure. Always carries the file path and line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Weights-file format or size problem.
    #[error("weights file {path}: {msg}")]
    Weights { path: String, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Submitting work to a cluster that has been stopped.
    #[error("cluster {0} is stopped")]
    ClusterStopped(usize),

    /// A blocking wait was interrupted by runtime shutdown.
    #[error("runtime shut down while waiting for layer {0}")]
    ShutdownDuringWait(usize),

    /// Unknown cluster id in a scheduler notification.
    #[error("unknown cluster id {0}")]
    UnknownCluster(usize),

    /// A pipeline stage or worker thread panicked.
    #[error("worker panicked: {0}")]
    WorkerPanic(String),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
