//! Binary feature maps: a `FEAT` magic word, then height, width and channel
//! count as little-endian `u32`, then `f32` values, channel-major, row-major.

use std::path::Path;

use boxseg_core::Grid;

use crate::error::{CliError, Result};

pub const MAGIC: u32 = u32::from_le_bytes(*b"FEAT");
const HEADER: usize = 16;

pub fn decode(bytes: &[u8]) -> std::result::Result<Grid, String> {
    if bytes.len() < HEADER {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != MAGIC {
        return Err(format!("bad magic {:#010x}", word(0)));
    }
    let (h, w, c) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| format!("shape {h}x{w}x{c} overflows"))?;
    if bytes.len() - HEADER != 4 * n {
        return Err(format!(
            "body has {} bytes, shape {h}x{w}x{c} needs {}",
            bytes.len() - HEADER,
            4 * n
        ));
    }
    let values = bytes[HEADER..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Grid::new(h, w, c, values).map_err(|e| e.to_string())
}

pub fn encode(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * grid.values().len());
    for v in [MAGIC, grid.height() as u32, grid.width() as u32, grid.channels() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in grid.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn load(path: &Path) -> Result<Grid> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    decode(&bytes).map_err(|msg| CliError::Format {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn save(path: &Path, grid: &Grid) -> Result<()> {
    std::fs::write(path, encode(grid)).map_err(CliError::io(path))
}
