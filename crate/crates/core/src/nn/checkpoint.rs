//! Binary parameter checkpoints.
//!
//! Layout: 8-byte magic `MRWPARAM`, u32 version, u32 entry count, then per
//! entry a u32 name length, UTF-8 name, u32 rank and u32 dims; finally every
//! value as little-endian f32 in manifest order.

use std::io::{Read, Write};

use super::layers::Module;
use crate::error::{Error, Result};

pub const PARAM_MAGIC: &[u8; 8] = b"MRWPARAM";
pub const PARAM_VERSION: u32 = 1;

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("unexpected end: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("unexpected end: {e}")))?;
    Ok(f64::from_le_bytes(b))
}

/// (name, shape) of every parameter in visit order.
pub fn manifest<M: Module + ?Sized>(module: &M) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    module.visit_params(&mut |p| out.push((p.name.clone(), p.value.shape().to_vec())));
    out
}

pub fn save_params<M: Module + ?Sized>(module: &M, w: &mut impl Write) -> Result<()> {
    let entries = manifest(module);
    w.write_all(PARAM_MAGIC)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_u32(w, PARAM_VERSION)?;
    write_u32(w, entries.len() as u32)?;
    for (name, shape) in &entries {
        write_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        write_u32(w, shape.len() as u32)?;
        for &d in shape {
            write_u32(w, d as u32)?;
        }
    }
    let mut values = Vec::new();
    module.visit_params(&mut |p| {
        for &v in p.value.data() {
            values.extend_from_slice(&(v as f32).to_le_bytes());
        }
    });
    w.write_all(&values)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Loads values into `module`; the stored manifest must match exactly.
pub fn load_params<M: Module + ?Sized>(module: &mut M, r: &mut impl Read) -> Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("missing magic: {e}")))?;
    if &magic != PARAM_MAGIC {
        return Err(Error::Checkpoint(
            "bad magic, not a parameter checkpoint".into(),
        ));
    }
    let version = read_u32(r)?;
    if version != PARAM_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(r)? as usize;
    let expected = manifest(module);
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {count} entries, model has {}",
            expected.len()
        )));
    }
    for (name, shape) in &expected {
        let len = read_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let stored =
            String::from_utf8(buf).map_err(|_| Error::Checkpoint("non-UTF-8 name".into()))?;
        let rank = read_u32(r)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(r)? as usize);
        }
        if &stored != name || &dims != shape {
            return Err(Error::Checkpoint(format!(
                "manifest mismatch: stored {stored} {dims:?}, model expects {name} {shape:?}"
            )));
        }
    }
    let total: usize = expected
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum();
    let mut raw = vec![0u8; total * 4];
    r.read_exact(&mut raw)
        .map_err(|e| Error::Checkpoint(format!("truncated values: {e}")))?;
    let mut values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    module.visit_params_mut(&mut |p| {
        for v in p.value.data_mut() {
            *v = values.next().expect("value count checked");
        }
    });
    Ok(())
}
