//! Files, dataset directories, reports and the command implementations
//! behind the `mavit` binary. All computation lives in [`mavit_core`].

use std::path::{Path, PathBuf};

pub mod checkpoint_file;
pub mod cmd;
pub mod manifest;
pub mod pgm;
pub mod report;
pub mod run_config;
pub mod scoring;
pub mod tensor_file;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: {} problem(s):\n  {}", path.display(), items.len(), items.join("\n  "))]
    Load { path: PathBuf, items: Vec<String> },
    #[error(transparent)]
    Core(#[from] mavit_core::Error),
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
