//! Checkpoint format: magic, format version, JSON shape manifest, then the
//! raw little-endian f32 parameter blob in manifest order.

use super::param::ParamStore;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DLCP";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn save_checkpoint(path: &Path, store: &ParamStore) -> Result<()> {
    let manifest: Vec<ManifestEntry> = store
        .ids()
        .map(|id| {
            let p = store.param(id);
            ManifestEntry {
                name: p.name.clone(),
                rows: p.rows,
                cols: p.cols,
            }
        })
        .collect();
    let manifest_bytes =
        serde_json::to_vec(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(manifest_bytes.len() as u32).to_le_bytes())?;
    f.write_all(&manifest_bytes)?;
    for id in store.ids() {
        for &v in &store.param(id).data {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Load parameter values into an existing store. The manifest must match the
/// store's parameters exactly (same names, same shapes, nothing extra or
/// missing); architecture changes invalidate old checkpoints loudly.
pub fn load_checkpoint(path: &Path, store: &mut ParamStore) -> Result<()> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    f.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    f.read_exact(&mut word)?;
    let manifest_len = u32::from_le_bytes(word) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    f.read_exact(&mut manifest_bytes)?;
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;

    if manifest.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, store has {}",
            manifest.len(),
            store.len()
        )));
    }
    for entry in &manifest {
        let id = store
            .get(&entry.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter '{}'", entry.name)))?;
        let p = store.param(id);
        if p.rows != entry.rows || p.cols != entry.cols {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for '{}': checkpoint {}x{}, store {}x{}",
                entry.name, entry.rows, entry.cols, p.rows, p.cols
            )));
        }
        let mut buf = vec![0u8; entry.rows * entry.cols * 4];
        f.read_exact(&mut buf).map_err(|_| {
            Error::Checkpoint(format!("blob truncated at parameter '{}'", entry.name))
        })?;
        let data = store.data_mut(id);
        for (i, chunk) in buf.chunks_exact(4).enumerate() {
            data[i] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    let mut extra = [0u8; 1];
    if f.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after blob".into()));
    }
    store.check_finite()
}
