//! JSON-lines reading and writing shared by every on-disk artifact.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Serializes each item as one compact JSON object followed by `\n`.
pub fn to_writer<T: Serialize, W: Write>(mut w: W, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn to_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    to_writer(&mut out, items).expect("writing to a Vec cannot fail");
    out
}

pub fn write_file<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), JsonlError> {
    let path = path.as_ref();
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    to_writer(BufWriter::new(file), items).map_err(io_err)
}

/// Parses JSON lines, skipping blank lines. `origin` only labels errors.
pub fn from_reader<T: DeserializeOwned, R: BufRead>(
    reader: R,
    origin: &str,
) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: origin.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| JsonlError::Json {
            path: origin.to_string(),
            line: i + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: origin.clone(),
        source,
    })?;
    from_reader(BufReader::new(file), &origin)
}
