//! Binary feature cache.
//!
//! Layout, all integers little-endian:
//!
//! | offset      | size    | field                                  |
//! |-------------|---------|----------------------------------------|
//! | 0           | 4       | magic `RFEV`                           |
//! | 4           | 2       | version (u16, currently 1)             |
//! | 6           | 4       | D (u32)                                |
//! | 10          | 8       | N (u64)                                |
//! | 18          | 4·N·D   | row-major f32 values                   |
//! | 18 + 4·N·D  | 4       | metadata length L (u32)                |
//! | 22 + 4·N·D  | L       | metadata, UTF-8 JSON                   |
//!
//! The file ends exactly after the metadata.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureMeta};

pub const MAGIC: &[u8; 4] = b"RFEV";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

pub fn encode_features(features: &FeatureMatrix) -> Result<Vec<u8>> {
    let dim = u32::try_from(features.dim())
        .map_err(|_| Error::Param(format!("dimension {} does not fit in u32", features.dim())))?;
    let meta = serde_json::to_vec(&features.meta)?;
    let meta_len = u32::try_from(meta.len())
        .map_err(|_| Error::Param("metadata exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * features.data().len() + 4 + meta.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(features.rows() as u64).to_le_bytes());
    for v in features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn take<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    offset
        .checked_add(len)
        .and_then(|end| bytes.get(offset..end))
        .ok_or_else(|| {
            format_err(
                bytes.len(),
                format!("truncated {what}: needed {len} bytes at offset {offset}, file has {}", bytes.len()),
            )
        })
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}, expected \"RFEV\"")));
    }
    let version = u16::from_le_bytes(take(bytes, 4, 2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}, expected {VERSION}")));
    }
    let dim = u32::from_le_bytes(take(bytes, 6, 4, "dimension")?.try_into().unwrap()) as usize;
    let rows = u64::from_le_bytes(take(bytes, 10, 8, "row count")?.try_into().unwrap());
    if dim == 0 {
        return Err(format_err(6, "dimension is zero"));
    }
    if rows == 0 {
        return Err(format_err(10, "row count is zero"));
    }
    let body_len = usize::try_from(rows)
        .ok()
        .and_then(|n| n.checked_mul(dim))
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| format_err(10, format!("{rows} rows of {dim} floats overflow")))?;
    let body = take(bytes, HEADER_LEN, body_len, "feature body")?;
    let mut data = Vec::with_capacity(body_len / 4);
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        data.push(v);
    }
    let len_at = HEADER_LEN + body_len;
    let meta_len = u32::from_le_bytes(take(bytes, len_at, 4, "metadata length")?.try_into().unwrap()) as usize;
    let meta_at = len_at + 4;
    let meta_bytes = take(bytes, meta_at, meta_len, "metadata")?;
    let end = meta_at + meta_len;
    if bytes.len() != end {
        return Err(format_err(end, format!("{} unexpected trailing bytes", bytes.len() - end)));
    }
    let meta: FeatureMeta = serde_json::from_slice(meta_bytes)
        .map_err(|e| format_err(meta_at, format!("invalid metadata JSON: {e}")))?;
    FeatureMatrix::new(rows as usize, dim, data, meta)
}

pub fn save_features(features: &FeatureMatrix, path: &Path) -> Result<()> {
    super::write_atomic(path, &encode_features(features)?)
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
