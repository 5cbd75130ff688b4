//! Weight blobs: raw little-endian `f64` values in [`ParamStore::flatten`] order.

use std::fs;
use std::path::Path;

use super::params::{ParamShape, ParamStore};

pub fn write_blob(path: &Path, store: &ParamStore) -> std::io::Result<()> {
    let flat = store.flatten();
    let mut bytes = Vec::with_capacity(flat.len() * 8);
    for v in flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)
}

pub fn read_blob(path: &Path, shapes: &[ParamShape], store: &mut ParamStore) -> Result<(), String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{}: length {} is not a multiple of 8", path.display(), bytes.len()));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    store.load_flat(shapes, &flat)
}
