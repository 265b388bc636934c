use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sensorfix::Error),

    #[error("checksum mismatch for {}: expected {expected}, found {actual}", path.display())]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("replay of run {run_index} differs from the recorded run: {reason}")]
    ReplayMismatch { run_index: usize, reason: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Csv(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::ChecksumMismatch { .. } => "ChecksumMismatch",
            CliError::ReplayMismatch { .. } => "ReplayMismatch",
            CliError::Manifest(_) => "Manifest",
            CliError::Io { .. } => "Io",
            CliError::Csv(_) => "Csv",
            CliError::Usage(_) => "Usage",
        }
    }

    /// `error: kind=<Kind> message="<escaped message>"`
    pub fn machine_line(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error: kind={} message=\"{msg}\"", self.kind())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e.to_string())
    }
}
