//! One module per subcommand. Each returns a report plus an exit status;
//! the binary prints the report and exits with the status.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::report::Report;
use crate::IoError;

pub mod eval;
pub mod gen;
pub mod grad_check;
pub mod masks;
pub mod train;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// A command that could not produce its report.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config values or arguments.
    Usage(String),
    /// Non-finite values during computation.
    Numeric(String),
    /// Anything else: files, formats, internal contracts.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Numeric(_) => EXIT_NUMERIC,
            Failure::Runtime(_) => EXIT_CHECK,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
            Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<mavit_core::Error> for Failure {
    fn from(e: mavit_core::Error) -> Self {
        use mavit_core::Error as E;
        match e {
            E::NonFinite(_) => Failure::Numeric(e.to_string()),
            E::Config(_) | E::UnknownModality(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Core(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub exit_code: u8,
}

impl Outcome {
    pub fn ok(report: Report) -> Self {
        Outcome {
            report,
            exit_code: EXIT_OK,
        }
    }
}

pub fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required")))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| IoError::io(path, e).into())
}

pub fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| IoError::io(path, e).into())
}
