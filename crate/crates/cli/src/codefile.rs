//! Binary code files.
//!
//! Layout: `b"PSCA"`, a version byte (1), `r` as u32 LE, `n` as u64 LE, then
//! `n` rows of `ceil(r/8)` bytes. Bit `k` of a code lives in byte `k / 8` at
//! position `7 - k % 8` (most significant first); a set bit means `+1`.
//! Unused trailing bits are zero.

use std::fs;
use std::path::Path;

use psca_core::{Matrix, PscaError, Result};

pub const MAGIC: &[u8; 4] = b"PSCA";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 8;

/// Serializes the columns of an `r x n` sign matrix.
pub fn encode(codes: &Matrix) -> Vec<u8> {
    let (r, n) = codes.shape();
    let row_bytes = r.div_ceil(8);
    let mut out = Vec::with_capacity(HEADER_LEN + n * row_bytes);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(r as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for j in 0..n {
        let mut row = vec![0u8; row_bytes];
        for k in 0..r {
            if codes[(k, j)] > 0.0 {
                row[k / 8] |= 0x80 >> (k % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

/// Parses a code file into an `r x n` sign matrix; `path` labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Matrix> {
    let bad = |msg: String| PscaError::format(path, msg);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    if bytes[4] != VERSION {
        return Err(bad(format!("unsupported version {}", bytes[4])));
    }
    let r = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    if r == 0 {
        return Err(bad("code length is zero".into()));
    }
    let row_bytes = r.div_ceil(8);
    let payload = &bytes[HEADER_LEN..];
    let expected = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(row_bytes))
        .ok_or_else(|| bad(format!("sample count {n} is too large")))?;
    if payload.len() != expected {
        return Err(bad(format!(
            "payload is {} bytes, expected {expected} for {n} codes of {r} bits",
            payload.len()
        )));
    }
    let n = n as usize;
    let pad_mask = if r.is_multiple_of(8) { 0 } else { 0xFFu8 >> (r % 8) };
    for j in 0..n {
        if payload[j * row_bytes + row_bytes - 1] & pad_mask != 0 {
            return Err(bad(format!("code {j} has nonzero padding bits")));
        }
    }
    Ok(Matrix::from_fn(r, n, |k, j| {
        if payload[j * row_bytes + k / 8] & (0x80 >> (k % 8)) != 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

pub fn write(path: &Path, codes: &Matrix) -> Result<()> {
    fs::write(path, encode(codes)).map_err(|e| PscaError::io(path, e))
}

pub fn read(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| PscaError::io(path, e))?;
    decode(&bytes, path)
}
