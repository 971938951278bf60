use std::path::PathBuf;

use cphm::CphmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {err}", path = .0.display(), err = .1)]
    Io(PathBuf, #[source] std::io::Error),

    #[error(transparent)]
    Core(#[from] CphmError),

    #[error("tolerance check failed: {0}")]
    Tolerance(String),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures, 4 for failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(..) => 2,
            CliError::Tolerance(_) => 4,
            CliError::Core(e) => match innermost(e) {
                CphmError::Config(_)
                | CphmError::Source(_)
                | CphmError::SnapFailure { .. }
                | CphmError::UnsupportedOracle(_) => 2,
                _ => 3,
            },
        }
    }
}

fn innermost(e: &CphmError) -> &CphmError {
    match e {
        CphmError::Stage { source, .. } => innermost(source),
        other => other,
    }
}
