//! Exit-code policy: 0 success, 1 domain failure (the data cannot support
//! the request: class balance, pool sizes, unscorable tasks, diverging
//! loss), 2 usage or IO failure (bad flags, malformed files or configs,
//! unreadable checkpoints).

use cra_core::episodes::{EpisodeError, LoadError};
use cra_core::featurize::ContainerError;
use cra_core::model::{CheckpointError, ModelError};
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Usage(String),
    /// Exit 1.
    Domain(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> CliError {
        CliError::Domain(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Domain(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> CliError {
        CliError::Usage(format!("unreadable checkpoint: {e}"))
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<EpisodeError> for CliError {
    fn from(e: EpisodeError) -> CliError {
        match e {
            EpisodeError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> CliError {
        match e {
            ModelError::InvalidConfig { .. } | ModelError::MissingReference => {
                CliError::Usage(e.to_string())
            }
            ModelError::Episode(ep) => ep.into(),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

/// IO with the offending path in the message.
pub fn io_usage(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}
