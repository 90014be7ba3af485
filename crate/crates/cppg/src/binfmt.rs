//! Sample files: a 20-byte header followed by little-endian `f32` payload.
//!
//! ```text
//! 0  magic   b"CPPGSMP1"
//! 8  u32     blocks
//! 12 u32     channels per block
//! 16 u32     samples per channel
//! 20 f32[blocks * channels * samples]
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CPPGSMP1";
const HEADER: usize = 20;

/// `blocks[b][c][t]`, all blocks with the same channel count and length.
pub fn encode(blocks: &[&[Vec<f64>]]) -> Vec<u8> {
    let channels = blocks.first().map_or(0, |b| b.len());
    let len = blocks.first().and_then(|b| b.first()).map_or(0, |c| c.len());
    let mut out = Vec::with_capacity(HEADER + 4 * blocks.len() * channels * len);
    out.extend_from_slice(MAGIC);
    for v in [blocks.len(), channels, len] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for b in blocks {
        debug_assert_eq!(b.len(), channels);
        for c in b.iter() {
            debug_assert_eq!(c.len(), len);
            for &x in c {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<Vec<Vec<f64>>>> {
    if bytes.len() < HEADER {
        return Err(Error::format(path, bytes.len() as u64, "truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format(path, 0, "bad magic bytes"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (blocks, channels, len) = (word(8), word(12), word(16));
    let need = blocks.checked_mul(channels).and_then(|n| n.checked_mul(len)).and_then(|n| n.checked_mul(4));
    let Some(need) = need else {
        return Err(Error::format(path, 8, "header dimensions overflow"));
    };
    if bytes.len() - HEADER < need {
        return Err(Error::format(path, bytes.len() as u64, format!("truncated payload, expected {} bytes", HEADER + need)));
    }
    if bytes.len() - HEADER > need {
        return Err(Error::format(path, (HEADER + need) as u64, "trailing bytes after payload"));
    }
    let mut vals = bytes[HEADER..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64);
    Ok((0..blocks).map(|_| (0..channels).map(|_| vals.by_ref().take(len).collect()).collect()).collect())
}

pub fn write(path: &Path, blocks: &[&[Vec<f64>]]) -> Result<()> {
    fs::write(path, encode(blocks)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<Vec<Vec<f64>>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}
