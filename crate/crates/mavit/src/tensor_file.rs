//! Raw tensor files: an 8-byte magic, `u32` rank, `u32` dims, then the
//! values as little-endian `f32`. Everything is little-endian.

use std::fs;
use std::path::Path;

use mavit_core::Tensor;

use crate::IoError;

pub const MAGIC: &[u8; 8] = b"MVTENS01";

/// Values are narrowed to `f32`; tensors produced by the generator are
/// already `f32`-exact, so they round-trip bit for bit.
pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.shape().len() + 4 * t.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, String> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err("not a tensor file (bad magic)".into());
    }
    let word = |i: usize| -> Option<u32> { bytes.get(i..i + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap())) };
    let rank = word(8).unwrap() as usize;
    if rank == 0 || rank > 8 {
        return Err(format!("unsupported rank {rank}"));
    }
    let mut shape = Vec::with_capacity(rank);
    for k in 0..rank {
        shape.push(word(12 + 4 * k).ok_or("truncated header")? as usize);
    }
    let start = 12 + 4 * rank;
    let numel = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or("shape overflows")?;
    let expected = start + 4 * numel;
    if bytes.len() != expected {
        return Err(format!(
            "truncated or oversized payload: {} bytes, expected {expected} for shape {shape:?}",
            bytes.len()
        ));
    }
    let data = bytes[start..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Tensor::new(shape, data).map_err(|e| e.to_string())
}

pub fn write(path: &Path, t: &Tensor) -> Result<(), IoError> {
    fs::write(path, encode(t)).map_err(|e| IoError::io(path, e))
}

pub fn read(path: &Path) -> Result<Tensor, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(&bytes).map_err(|msg| IoError::Format {
        path: path.to_path_buf(),
        msg,
    })
}
