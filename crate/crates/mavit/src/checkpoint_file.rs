use std::fs;
use std::path::Path;

use mavit_core::checkpoint::Checkpoint;

use crate::IoError;

pub fn save(path: &Path, ck: &Checkpoint) -> Result<(), IoError> {
    fs::write(path, ck.encode()).map_err(|e| IoError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    Checkpoint::decode(&bytes).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
