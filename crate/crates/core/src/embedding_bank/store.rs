//! Embedding bank files.
//!
//! Layout: the 8-byte magic `GAPEMB01`, a little-endian `u64` header length,
//! a JSON header (profile, row layout, ordered ids), then every row as
//! little-endian `f32` values in [`EmbeddingBundle::flatten`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DerivedVectors, EmbeddingBundle, EmbeddingError, EncoderProfile};

const MAGIC: &[u8; 8] = b"GAPEMB01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    profile: EncoderProfile,
    span_dim: usize,
    with_derived: bool,
    row_dim: usize,
    ids: Vec<String>,
}

/// A profile plus its bundles in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrixFile {
    pub profile: EncoderProfile,
    pub with_derived: bool,
    pub rows: Vec<EmbeddingBundle>,
}

impl EmbeddingMatrixFile {
    pub fn new(profile: EncoderProfile, with_derived: bool, rows: Vec<EmbeddingBundle>) -> Result<Self, EmbeddingError> {
        let span_dim = profile.span_dim();
        for (i, r) in rows.iter().enumerate() {
            let dims_ok = r.p.len() == span_dim && r.a.len() == span_dim && r.b.len() == span_dim;
            let derived_ok = match (&r.derived, with_derived) {
                (Some(d), true) => d.pa.len() == span_dim && d.pb.len() == span_dim && d.ab_minus_pp.len() == span_dim,
                (None, false) => true,
                _ => false,
            };
            if !dims_ok || !derived_ok {
                return Err(EmbeddingError::FormatRow {
                    row: i,
                    message: format!("bundle {} does not match layout (span dim {span_dim}, derived {with_derived})", r.example_id),
                });
            }
        }
        Ok(Self {
            profile,
            with_derived,
            rows,
        })
    }

    pub fn row_dim(&self) -> usize {
        self.profile.span_dim() * if self.with_derived { 6 } else { 3 }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            profile: self.profile.clone(),
            span_dim: self.profile.span_dim(),
            with_derived: self.with_derived,
            row_dim: self.row_dim(),
            ids: self.rows.iter().map(|r| r.example_id.clone()).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(16 + json.len() + self.rows.len() * self.row_dim() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for r in &self.rows {
            for v in r.flatten() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let fmt = |m: &str| EmbeddingError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(fmt("missing GAPEMB01 magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| fmt("header truncated"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| EmbeddingError::Format(e.to_string()))?;
        header.profile.validate()?;
        let span_dim = header.profile.span_dim();
        let expected_row = span_dim * if header.with_derived { 6 } else { 3 };
        if header.span_dim != span_dim || header.row_dim != expected_row {
            return Err(EmbeddingError::Format(format!(
                "declared row dim {} disagrees with profile layout {expected_row}",
                header.row_dim
            )));
        }
        let payload = &bytes[16 + hlen..];
        let row_bytes = expected_row * 4;
        let mut rows = Vec::with_capacity(header.ids.len());
        for (i, id) in header.ids.iter().enumerate() {
            let chunk = payload.get(i * row_bytes..(i + 1) * row_bytes).ok_or_else(|| EmbeddingError::FormatRow {
                row: i,
                message: format!(
                    "truncated: expected {expected_row} values, found {}",
                    payload.len().saturating_sub(i * row_bytes) / 4
                ),
            })?;
            let vals: Vec<f32> = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let part = |k: usize| vals[k * span_dim..(k + 1) * span_dim].to_vec();
            rows.push(EmbeddingBundle {
                example_id: id.clone(),
                p: part(0),
                a: part(1),
                b: part(2),
                derived: header.with_derived.then(|| DerivedVectors {
                    pa: part(3),
                    pb: part(4),
                    ab_minus_pp: part(5),
                }),
            });
        }
        let used = header.ids.len() * row_bytes;
        if payload.len() != used {
            return Err(EmbeddingError::FormatRow {
                row: header.ids.len(),
                message: format!("{} trailing bytes after the last row", payload.len() - used),
            });
        }
        Ok(Self {
            profile: header.profile,
            with_derived: header.with_derived,
            rows,
        })
    }
}

pub fn persist_bundles(path: &Path, file: &EmbeddingMatrixFile) -> Result<(), EmbeddingError> {
    fs::write(path, file.to_bytes()).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_bundles(path: &Path) -> Result<EmbeddingMatrixFile, EmbeddingError> {
    let bytes = fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    EmbeddingMatrixFile::from_bytes(&bytes)
}
