//! Training harness for `semicredit-core`: configuration files, checkpoints,
//! per-iteration CSV logs, credit reports and learning-curve plots.

pub mod checkpoint;
pub mod config;
pub mod harness;
pub mod plot;
pub mod runlog;

use std::path::{Path, PathBuf};

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use runlog::{RunLog, RunRow};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] semicredit_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("checkpoint does not match environment: {0}")]
    Incompatible(String),
    #[error("training aborted at iteration {iteration}: {source} (state dumped to {dump})")]
    Aborted {
        iteration: usize,
        dump: PathBuf,
        #[source]
        source: semicredit_core::Error,
    },
    #[error("plot: {0}")]
    Plot(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        HarnessError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
