use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Integrity { path: PathBuf, reason: String },
    #[error("missing artifact {0}; run the upstream command first")]
    MissingArtifact(PathBuf),
    #[error("{path} was produced from a different scenario; rerun the upstream command")]
    Stale { path: PathBuf },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] elastomono::Error),
    #[error("verification failed: {}", .0.join(", "))]
    Verification(Vec<String>),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage, 3 resonance, 4 verification failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Scenario(_) => 2,
            CliError::Core(elastomono::Error::Resonance { .. }) => 3,
            CliError::Verification(_) => 4,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(e.to_string())
    }
}
