//! Subcommand implementations behind the `tempdepth` binary.

use std::path::Path;

pub mod config;
pub mod demo;
pub mod evaluate;
pub mod plot;
pub mod simulate;

/// Failure of a subcommand, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration (exit code 2).
    #[error("{0}")]
    Usage(String),
    /// Input data or numerics that cannot be processed (exit code 3).
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<tempdepth::Error> for CliError {
    fn from(e: tempdepth::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Writes `contents` to `dir/name`, creating `dir` first.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
