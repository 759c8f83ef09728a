use std::path::{Path, PathBuf};

use serde::Serialize;

/// Exit status for configuration and missing-input errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for a failing pipeline stage.
pub const EXIT_STAGE: i32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Input,
    Stage,
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub stage: String,
    pub path: Option<PathBuf>,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            stage: "config".into(),
            path: None,
            message: message.into(),
        }
    }

    pub fn input(path: &Path, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Input,
            stage: "input".into(),
            path: Some(path.to_path_buf()),
            message: message.into(),
        }
    }

    pub fn stage(stage: &str, err: impl std::fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Stage,
            stage: stage.into(),
            path: None,
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config | ErrorKind::Input => EXIT_USAGE,
            ErrorKind::Stage => EXIT_STAGE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{} error: {}: {}", self.stage, p.display(), self.message),
            None => write!(f, "{} error: {}", self.stage, self.message),
        }
    }
}

impl std::error::Error for CliError {}

/// Tags a core error with the stage that produced it.
pub trait StageContext<T> {
    fn stage(self, stage: &str) -> Result<T, CliError>;
}

impl<T, E: std::fmt::Display> StageContext<T> for Result<T, E> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::stage(stage, e))
    }
}
