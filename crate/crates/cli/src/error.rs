use std::io;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;
use vlsf_core::Error as CoreError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input not found: {}", .0.display())]
    InputNotFound(PathBuf),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// How a bare domain error from the library should be reported, which
/// depends on the stage that raised it.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Config,
    Input,
    Numeric,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::InputNotFound(_) => "input-not-found",
            CliError::Input(_) => "input-invalid",
            CliError::Config(_) => "config-invalid",
            CliError::Numeric(_) => "numeric-failure",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InputNotFound(_) | CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn from_core(err: CoreError, stage: Stage, path: Option<&std::path::Path>) -> Self {
        match err {
            CoreError::Io(e) if e.kind() == io::ErrorKind::NotFound => match path {
                Some(p) => CliError::InputNotFound(p.to_path_buf()),
                None => CliError::Io(e),
            },
            CoreError::Io(e) => CliError::Io(e),
            CoreError::Format(e) => CliError::Input(e.to_string()),
            CoreError::Config(m) => CliError::Config(m),
            e @ (CoreError::Numeric(_) | CoreError::SinglePoint(_) | CoreError::UndefinedCoherence) => {
                CliError::Numeric(e.to_string())
            }
            CoreError::Domain(m) => match stage {
                Stage::Config => CliError::Config(m),
                Stage::Input => CliError::Input(m),
                Stage::Numeric => CliError::Numeric(m),
            },
        }
    }

    /// One-line JSON for standard error.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            message: String,
            exit_code: i32,
        }
        serde_json::to_string(&Report {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("error report serializes")
    }
}

/// Attaches a stage to library results.
pub trait CoreResultExt<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T> CoreResultExt<T> for vlsf_core::Result<T> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|e| CliError::from_core(e, stage, None))
    }
}
