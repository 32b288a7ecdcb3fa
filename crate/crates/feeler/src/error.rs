use std::path::{Path, PathBuf};
use thiserror::Error;

use feeler_core::analysis::AnalysisError;
use feeler_core::design_space::{SpaceError, ValidationError};
use feeler_core::gp::GpError;
use feeler_core::metrics::MetricsError;
use feeler_core::oracle::OracleError;
use feeler_core::preference::PreferenceError;
use feeler_core::proactive::ProactiveError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("{} is not empty; refusing to initialize over it", .0.display())]
    NotEmpty(PathBuf),
    #[error("{} is locked by another command (remove the lock file if no command is running)", .0.display())]
    Locked(PathBuf),
    #[error("{} is not an experiment directory", .0.display())]
    NotAnExperiment(PathBuf),
    /// A command was run before the state it depends on exists.
    #[error("{0}")]
    Ordering(String),
    #[error("{0}")]
    Holdout(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Proactive(#[from] ProactiveError),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn artifact(path: &Path, message: impl Into<String>) -> Self {
        Self::Artifact {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}
