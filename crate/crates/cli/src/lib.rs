//! File formats, plotting, and the `psylm` command-line pipeline.
//!
//! The numerical work lives in `psylm-core`; this crate adds everything that
//! touches the filesystem: ARPA import/export, the TSV/JSON/CSV formats the
//! subcommands exchange, run manifests with content checksums, and a small
//! SVG plotter for partial-effect curves.

pub mod arpa;
pub mod manifest;
pub mod plot;
pub mod run;
pub mod suite;
pub mod tsv;

use std::fmt;
use std::path::Path;

/// Errors a subcommand can surface.
///
/// `Usage` maps to exit code 1, everything else to exit code 2.
#[derive(Debug)]
pub enum CliError {
    /// The flags/arguments were structurally valid but incoherent.
    Usage(String),
    /// Reading or writing a file failed.
    Io { path: String, source: std::io::Error },
    /// A file had the wrong shape; `line` is 1-based.
    Parse { path: String, line: usize, message: String },
    /// The inputs parsed but the requested computation is impossible.
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
            CliError::Parse { path, line, message } => {
                write!(f, "{path}:{line}: {message}")
            }
            CliError::Data(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl CliError {
    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> CliError {
        CliError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> CliError {
        CliError::Data(message.into())
    }

    /// Process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

/// Read a whole file, tagging IO errors with the path.
pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write a whole file, tagging IO errors with the path.
pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Shortest-round-trip decimal rendering of an `f64`.
///
/// Every numeric field in TSV/CSV/JSON outputs goes through this, so values
/// survive a write/read cycle bit for bit and reruns are byte-identical.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
