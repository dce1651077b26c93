//! Binary feature container: magic "CRAF", version, count, dimension, then
//! row-major little-endian f64 rows. Normalization stats travel in a JSON
//! sidecar written by the CLI, not here.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CRAF_MAGIC: &[u8; 4] = b"CRAF";
pub const CRAF_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"CRAF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error("container truncated: expected {expected} rows of {dim} floats")]
    Truncated { expected: u64, dim: u64 },
    #[error("row {row} has {got} values, container dimension is {dim}")]
    RaggedRow { row: usize, got: usize, dim: usize },
}

/// Writes rows (all of equal length) to `path`.
pub fn write_container(path: &Path, rows: &[Vec<f64>], dim: usize) -> Result<(), ContainerError> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(ContainerError::RaggedRow { row: i, got: row.len(), dim });
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CRAF_MAGIC)?;
    w.write_all(&CRAF_VERSION.to_le_bytes())?;
    w.write_all(&(rows.len() as u64).to_le_bytes())?;
    w.write_all(&(dim as u64).to_le_bytes())?;
    for row in rows {
        for &x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a container; returns (rows, dimension).
pub fn read_container(path: &Path) -> Result<(Vec<Vec<f64>>, usize), ContainerError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CRAF_MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != CRAF_VERSION {
        return Err(ContainerError::BadVersion(version));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf);
    r.read_exact(&mut u64buf)?;
    let dim = u64::from_le_bytes(u64buf);

    let mut rows = Vec::with_capacity(count as usize);
    let mut row_bytes = vec![0u8; dim as usize * 8];
    for _ in 0..count {
        r.read_exact(&mut row_bytes)
            .map_err(|_| ContainerError::Truncated { expected: count, dim })?;
        let row: Vec<f64> = row_bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        rows.push(row);
    }
    Ok((rows, dim as usize))
}
