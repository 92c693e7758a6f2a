use std::path::Path;

use serde::Serialize;
use thiserror::Error;

/// Process exit codes. Anything not listed exits with 1.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_FILE: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing file `{path}`")]
    MissingFile { path: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}{source}")]
    Core {
        context: String,
        #[source]
        source: xmold_core::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        let path = path.display().to_string();
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingFile { path }
        } else {
            CliError::Io { path, source }
        }
    }

    /// Attach the file a core error came from.
    pub fn in_file(path: &Path, source: xmold_core::Error) -> Self {
        CliError::Core {
            context: format!("{}: ", path.display()),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::MissingFile { .. } => "missing-file",
            CliError::Io { .. } => "io",
            CliError::Core { source, .. } => match source.root() {
                xmold_core::Error::Schema { .. } => "schema",
                xmold_core::Error::InvalidParameter(_) | xmold_core::Error::InvalidFractions(_) => "usage",
                xmold_core::Error::Stagnated { .. } => "stagnated",
                xmold_core::Error::Json(_) | xmold_core::Error::Csv(_) | xmold_core::Error::Format(_) => "format",
                _ => "failed",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => EXIT_USAGE,
            "missing-file" => EXIT_MISSING_FILE,
            "schema" => EXIT_SCHEMA,
            _ => 1,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            code: i32,
            message: String,
        }
        serde_json::to_string(&Line {
            error: self.kind(),
            code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("plain strings serialize")
    }
}

impl From<xmold_core::Error> for CliError {
    fn from(source: xmold_core::Error) -> Self {
        CliError::Core {
            context: String::new(),
            source,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        xmold_core::Error::from(e).into()
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        xmold_core::Error::from(e).into()
    }
}
