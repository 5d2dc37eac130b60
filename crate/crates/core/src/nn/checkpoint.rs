//! Binary weight files.
//!
//! Layout (little endian): magic `VIPOSECK`, `u32` version, 16-byte ASCII
//! topology hash, `u64` tensor count, then per tensor `u64` rows, `u64` cols
//! and `rows * cols` `f64` values in row-major order. Tensors follow
//! [`Sequential::state`] order across all networks passed in.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::Sequential;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"VIPOSECK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HASH_LEN: usize = 16;

fn hash_bytes(hash: &str) -> Result<[u8; HASH_LEN]> {
    let b = hash.as_bytes();
    if b.len() != HASH_LEN {
        return Err(Error::Checkpoint(format!(
            "topology hash must be {HASH_LEN} characters, got {:?}",
            hash
        )));
    }
    let mut out = [0; HASH_LEN];
    out.copy_from_slice(b);
    Ok(out)
}

pub fn write_checkpoint_bytes(topology_hash: &str, nets: &[&Sequential]) -> Result<Vec<u8>> {
    let tensors: Vec<&Array2<f64>> = nets.iter().flat_map(|n| n.state()).collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&hash_bytes(topology_hash)?);
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.data.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Restores every network's state in place. Nothing is modified unless the
/// whole file matches the networks' layout.
pub fn read_checkpoint_bytes(
    data: &[u8],
    topology_hash: &str,
    nets: &mut [&mut Sequential],
) -> Result<()> {
    let mut c = Cursor { data, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let hash = c.take(HASH_LEN)?;
    if hash != hash_bytes(topology_hash)? {
        return Err(Error::Checkpoint(format!(
            "topology hash mismatch: file has {}, expected {topology_hash}",
            String::from_utf8_lossy(hash)
        )));
    }
    let count = c.u64()? as usize;
    let mut targets: Vec<&mut Array2<f64>> = nets.iter_mut().flat_map(|n| n.state_mut()).collect();
    if count != targets.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {count} tensors, model has {}",
            targets.len()
        )));
    }
    let mut loaded = Vec::with_capacity(count);
    for (i, t) in targets.iter().enumerate() {
        let rows = c.u64()? as usize;
        let cols = c.u64()? as usize;
        if (rows, cols) != t.dim() {
            return Err(Error::Checkpoint(format!(
                "tensor {i} is {rows}x{cols}, model expects {}x{}",
                t.nrows(),
                t.ncols()
            )));
        }
        let bytes = c.take(rows * cols * 8)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        loaded.push(Array2::from_shape_vec((rows, cols), values).expect("sized"));
    }
    if c.pos != data.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    for (t, v) in targets.iter_mut().zip(loaded) {
        **t = v;
    }
    Ok(())
}

pub fn write_checkpoint(path: &Path, topology_hash: &str, nets: &[&Sequential]) -> Result<()> {
    let bytes = write_checkpoint_bytes(topology_hash, nets)?;
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path, topology_hash: &str, nets: &mut [&mut Sequential]) -> Result<()> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    read_checkpoint_bytes(&data, topology_hash, nets)
}
