use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{norm, RagError};

/// File magic for the vector file.
const MAGIC: &[u8; 8] = b"PANZAVS1";

#[derive(Debug, Clone, PartialEq)]
pub struct StoredDoc {
    pub email_id: String,
    pub body: String,
    pub vector: Vec<f32>,
    pub norm: f64,
}

/// Flat, immutable-after-build embedding store.
///
/// On disk: `MAGIC`, `u32` dimension, `u32` count, then `count` records of
/// `dimension` little-endian `f32`s. A JSONL sidecar maps record index to
/// email id and body.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    docs: Vec<StoredDoc>,
}

#[derive(Serialize, Deserialize)]
struct SidecarRecord {
    index: usize,
    email_id: String,
    body: String,
}

/// `store.bin` -> `store.bin.meta.jsonl`.
pub fn sidecar_path(store: &Path) -> PathBuf {
    let mut name = store.as_os_str().to_owned();
    name.push(".meta.jsonl");
    PathBuf::from(name)
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, docs: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[StoredDoc] {
        &self.docs
    }

    pub fn contains(&self, email_id: &str) -> bool {
        self.docs.iter().any(|d| d.email_id == email_id)
    }

    pub fn insert(&mut self, email_id: &str, body: &str, vector: Vec<f32>) -> Result<(), RagError> {
        if vector.len() != self.dim {
            return Err(RagError::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        let n = norm(&vector);
        if !(n > 0.0 && n.is_finite()) {
            return Err(RagError::ZeroNorm(email_id.to_string()));
        }
        if self.contains(email_id) {
            return Err(RagError::DuplicateId(email_id.to_string()));
        }
        self.docs.push(StoredDoc {
            email_id: email_id.to_string(),
            body: body.to_string(),
            vector,
            norm: n,
        });
        Ok(())
    }

    pub fn vector_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.docs.len() * self.dim * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.docs.len() as u32).to_le_bytes());
        for d in &self.docs {
            for x in &d.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Writes the vector file and its sidecar.
    pub fn save(&self, path: &Path) -> Result<(), RagError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |source| RagError::Io { path: p, source }
        };
        fs::write(path, self.vector_bytes()).map_err(io(path))?;
        let side = sidecar_path(path);
        let mut w = BufWriter::new(fs::File::create(&side).map_err(io(&side))?);
        for (index, d) in self.docs.iter().enumerate() {
            let rec = SidecarRecord {
                index,
                email_id: d.email_id.clone(),
                body: d.body.clone(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(|e| RagError::Format(e.to_string()))?;
            w.write_all(b"\n").map_err(io(&side))?;
        }
        w.flush().map_err(io(&side))
    }

    pub fn load(path: &Path) -> Result<Self, RagError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |source| RagError::Io { path: p, source }
        };
        let mut bytes = Vec::new();
        BufReader::new(fs::File::open(path).map_err(io(path))?)
            .read_to_end(&mut bytes)
            .map_err(io(path))?;
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(RagError::Format("bad header".into()));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let payload = &bytes[16..];
        if payload.len() != count * dim * 4 {
            return Err(RagError::Format(format!(
                "expected {} payload bytes for {count} x {dim}, found {}",
                count * dim * 4,
                payload.len()
            )));
        }
        let side = sidecar_path(path);
        let meta: Vec<SidecarRecord> =
            crate::jsonl::read_file(&side).map_err(|e| RagError::Format(e.to_string()))?;
        if meta.len() != count {
            return Err(RagError::Format(format!(
                "sidecar has {} records, vector file has {count}",
                meta.len()
            )));
        }
        let mut store = Self::new(dim);
        for (i, rec) in meta.into_iter().enumerate() {
            if rec.index != i {
                return Err(RagError::Format(format!("sidecar record {i} has index {}", rec.index)));
            }
            let vector = payload[i * dim * 4..(i + 1) * dim * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.insert(&rec.email_id, &rec.body, vector)?;
        }
        Ok(store)
    }
}
