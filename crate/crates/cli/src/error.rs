use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("missing or invalid artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(#[source] nsbl_core::Error),
    #[error(transparent)]
    Core(nsbl_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn artifact(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CliError::Artifact {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 missing artifact, 4 numerical, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Artifact { .. } => 3,
            CliError::Numerical(_) => 4,
            _ => 1,
        }
    }
}

impl From<nsbl_core::Error> for CliError {
    fn from(e: nsbl_core::Error) -> Self {
        use nsbl_core::Error as E;
        match e {
            E::Singular { .. } | E::Divergence { .. } | E::Evaluation(_) | E::Sampler(_) | E::Optimization(_) => {
                CliError::Numerical(e)
            }
            E::UnknownSetup(id) => CliError::config("experiment", format!("unknown experiment `{id}`")),
            other => CliError::Core(other),
        }
    }
}
