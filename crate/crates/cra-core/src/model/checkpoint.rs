//! Model checkpoints: a magic-tagged binary file carrying the config and
//! variant as JSON plus every parameter tensor bit-exactly.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! "CRAM"  version:u32  header_len:u64  header JSON
//! repeat per tensor, in canonical parameter order:
//!   name_len:u64  name  rows:u64  cols:u64  rows*cols f64s, row major
//! ```

use super::config::{ModelConfig, Variant};
use super::params::CraParams;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"CRAM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint has bytes after the last tensor")]
    Trailing,
    #[error("checkpoint header: {0}")]
    Json(#[from] serde_json::Error),
    #[error("tensor order mismatch: expected {expected}, found {found}")]
    NameMismatch { expected: String, found: String },
    #[error("tensor {name}: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    ShapeMismatch {
        name: String,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    variant: Variant,
}

/// A loaded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub variant: Variant,
    pub params: CraParams,
}

/// Serializes a model to the checkpoint byte format.
pub fn to_bytes(
    config: &ModelConfig,
    variant: Variant,
    params: &CraParams,
) -> Result<Vec<u8>, CheckpointError> {
    let header =
        serde_json::to_vec(&Header { config: config.clone(), variant })?;
    let mut out = Vec::with_capacity(
        16 + header.len() + params.num_scalars() * 8,
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (name, tensor) in params.named() {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.rows as u64).to_le_bytes());
        out.extend_from_slice(&(tensor.cols as u64).to_le_bytes());
        for v in &tensor.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        if end > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Truncated)
    }
}

/// Parses checkpoint bytes, rebuilding the parameters in canonical order
/// and validating every tensor name and shape against the header's config.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let header_len = r.len()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)?;

    let mut params = CraParams::init(&header.config, header.variant);
    for (name, slot) in params.named_mut() {
        let name_len = r.len()?;
        let found = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::BadMagic)?;
        if found != name {
            return Err(CheckpointError::NameMismatch {
                expected: name,
                found: found.to_string(),
            });
        }
        let rows = r.len()?;
        let cols = r.len()?;
        if (rows, cols) != slot.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name,
                expected_rows: slot.rows,
                expected_cols: slot.cols,
                rows,
                cols,
            });
        }
        let n = rows.checked_mul(cols).ok_or(CheckpointError::Truncated)?;
        let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        for (k, chunk) in raw.chunks_exact(8).enumerate() {
            slot.data[k] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing);
    }
    Ok(Checkpoint { config: header.config, variant: header.variant, params })
}

/// Writes a checkpoint file.
pub fn save(
    path: &Path,
    config: &ModelConfig,
    variant: Variant,
    params: &CraParams,
) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(config, variant, params)?)?;
    Ok(())
}

/// Reads a checkpoint file.
pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    from_bytes(&std::fs::read(path)?)
}
