use std::path::PathBuf;

use thiserror::Error;

use crate::matrix::Rejection;

/// Failures raised by policy, reward, augmentor and embedding models.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("credential rejected by endpoint (HTTP {status}): {body}")]
    Credential { status: u16, body: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("malformed model response: {0}")]
    Malformed(String),
    #[error("reward {0} outside the unit interval")]
    RewardOutOfRange(f64),
    #[error("script error: {0}")]
    Script(String),
}

/// Infrastructure failures in an environment. Tool-level mistakes made by the
/// agent are reported as error observations instead.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment `{0}` is non-serializable and cannot be forked")]
    ForkUnsupported(String),
    #[error("stale state handle at depth {handle_depth}, environment is at depth {env_depth}")]
    StaleHandle { handle_depth: usize, env_depth: usize },
    #[error("unknown snapshot token {0}")]
    UnknownSnapshot(u64),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cell `{cell}` is inadmissible: {reason}")]
    Inadmissible { cell: String, reason: Rejection },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("augmentor failed on trajectory {trajectory}: {source}")]
    Augmentor {
        trajectory: String,
        #[source]
        source: ModelError,
    },
    #[error("search aborted at attempt {attempt}: {source}")]
    Aborted {
        attempt: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task sets differ; only in baseline: {only_baseline:?}, only in treatment: {only_treatment:?}")]
    TaskMismatch {
        only_baseline: Vec<String>,
        only_treatment: Vec<String>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
