//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `CUBESWNT`, `u32` format version, `u32`
//! length + JSON architecture descriptor, `u32` length + JSON metadata, `u32`
//! parameter count, then per parameter `u32` name length, name bytes, `u32`
//! rank, `u32` dims, and the values as `f32`.

use crate::net::{NetConfig, NetError, PolicyValueNet};
use crate::scalar::Scalar;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"CUBESWNT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a network checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint does not match its architecture: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn put_bytes<W: Write>(w: &mut W, b: &[u8]) -> std::io::Result<()> {
    put_u32(w, b.len() as u32)?;
    w.write_all(b)
}

fn get_bytes<R: Read>(r: &mut R, limit: usize) -> Result<Vec<u8>, CheckpointError> {
    let n = get_u32(r)? as usize;
    if n > limit {
        return Err(CheckpointError::Mismatch(format!(
            "field of {n} bytes exceeds limit {limit}"
        )));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn write_checkpoint<T: Scalar, W: Write>(
    mut w: W,
    net: &PolicyValueNet<T>,
    metadata: &serde_json::Value,
) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    put_bytes(&mut w, &serde_json::to_vec(net.config())?)?;
    put_bytes(&mut w, &serde_json::to_vec(metadata)?)?;
    put_u32(&mut w, net.param_specs().len() as u32)?;
    let mut buf = Vec::new();
    for ps in net.param_specs() {
        put_bytes(&mut w, ps.name.as_bytes())?;
        put_u32(&mut w, ps.shape.len() as u32)?;
        for &d in &ps.shape {
            put_u32(&mut w, d as u32)?;
        }
        buf.clear();
        for v in &net.params()[ps.range()] {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(
    mut r: R,
) -> Result<(PolicyValueNet<T>, serde_json::Value), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = get_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let config: NetConfig = serde_json::from_slice(&get_bytes(&mut r, 1 << 20)?)?;
    let metadata: serde_json::Value = serde_json::from_slice(&get_bytes(&mut r, 1 << 24)?)?;
    let mut net = PolicyValueNet::<T>::zeros(config)?;
    let count = get_u32(&mut r)? as usize;
    if count != net.param_specs().len() {
        return Err(CheckpointError::Mismatch(format!(
            "{count} parameter arrays, architecture has {}",
            net.param_specs().len()
        )));
    }
    for ps in net.param_specs().to_vec() {
        let name = String::from_utf8(get_bytes(&mut r, 4096)?)
            .map_err(|_| CheckpointError::Mismatch("parameter name is not UTF-8".into()))?;
        let rank = get_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| get_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if name != ps.name || shape != ps.shape {
            return Err(CheckpointError::Mismatch(format!(
                "found {name} {shape:?}, expected {} {:?}",
                ps.name, ps.shape
            )));
        }
        let mut raw = vec![0u8; 4 * ps.len()];
        r.read_exact(&mut raw)?;
        for (dst, chunk) in net.params_mut()[ps.range()]
            .iter_mut()
            .zip(raw.chunks_exact(4))
        {
            *dst = T::of(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(CheckpointError::Mismatch(
            "trailing bytes after parameters".into(),
        ));
    }
    Ok((net, metadata))
}

/// Writes to a temporary sibling and renames, so readers never see a
/// partial file.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    net: &PolicyValueNet<T>,
    metadata: &serde_json::Value,
) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    {
        let f = std::fs::File::create(&tmp)?;
        let mut w = std::io::BufWriter::new(f);
        write_checkpoint(&mut w, net, metadata)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(
    path: &Path,
) -> Result<(PolicyValueNet<T>, serde_json::Value), CheckpointError> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
