//! Command implementations behind the `curriculum` binary.

pub mod commands;
pub mod config;
pub mod remote;

use std::io::Write;
use std::path::{Path, PathBuf};

use curriculum_core::forge::ForgeError;
use curriculum_core::harness::HarnessError;
use curriculum_core::jsonl::JsonlError;
use curriculum_core::scheduler::SchedulerError;
use thiserror::Error;

pub use commands::{cmd_forge, cmd_simulate, cmd_train_toy, cmd_validate, export_csv};
pub use config::AppConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 1 data, 2 configuration, 3 backend.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) | CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<ForgeError> for CliError {
    fn from(e: ForgeError) -> Self {
        match e {
            ForgeError::Backend { .. } => CliError::Backend(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidConfig(_)
            | HarnessError::Registry(_)
            | HarnessError::Scheduler(SchedulerError::InvalidHyperparams(_)) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub(crate) fn jsonl_error(path: &Path, e: JsonlError) -> CliError {
    match e {
        JsonlError::Io(source) => CliError::io(path, source),
        other => CliError::Data(format!("{}: {other}", path.display())),
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`, so readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
