use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Every violated configuration field, one message each.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{0}")]
    Validation(String),

    #[error("{path}: format error at byte {offset}: {msg}")]
    Format {
        path: String,
        offset: u64,
        msg: String,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Model(#[from] sphereflow::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// 1 for anything the user can fix by changing inputs, 2 for runtime and
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        use sphereflow::Error as E;
        match self {
            CliError::Config(_)
            | CliError::Validation(_)
            | CliError::Format { .. }
            | CliError::Parse { .. }
            | CliError::Checkpoint { .. } => 1,
            CliError::Model(
                E::InvalidParameter(_)
                | E::DimensionMismatch { .. }
                | E::Unsupported(_)
                | E::Domain { .. },
            ) => 1,
            CliError::Model(_) | CliError::Io { .. } | CliError::Json(_) => 2,
        }
    }
}
