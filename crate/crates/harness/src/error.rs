use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON that does not match the expected shape; the message carries the
    /// line and column.
    #[error("{what}: {source}")]
    Parse {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid sweep: {0}")]
    Sweep(String),

    #[error(transparent)]
    Core(#[from] prefgame_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(what: &'static str, source: serde_json::Error) -> Self {
        HarnessError::Parse { what, source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Io { .. } => "io",
            HarnessError::Parse { .. } => "parse",
            HarnessError::Config(_) => "config",
            HarnessError::Sweep(_) => "sweep",
            HarnessError::Core(e) => e.kind(),
            HarnessError::Csv(_) => "csv",
        }
    }

    pub fn diagnostic(&self) -> Diagnostic {
        let (line, column) = match self {
            HarnessError::Parse { source, .. } => (Some(source.line()), Some(source.column())),
            _ => (None, None),
        };
        Diagnostic {
            kind: self.kind().to_string(),
            message: self.to_string(),
            line,
            column,
        }
    }
}

/// Machine-readable form of an error, as written to reports and stderr.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Diagnostic {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl From<&prefgame_core::Error> for Diagnostic {
    fn from(e: &prefgame_core::Error) -> Self {
        Diagnostic {
            kind: e.kind().to_string(),
            message: e.to_string(),
            line: None,
            column: None,
        }
    }
}
