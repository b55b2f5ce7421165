//! Binary file of precomputed embeddings.
//!
//! Layout: the magic line `TODALIGN-EMB 1\n`, one line of JSON header, then
//! `rows` records of (u32 LE id length, id bytes, `dimension` f32 LE).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::QueryScope;
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"TODALIGN-EMB 1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub encoder_id: String,
    pub dimension: usize,
    pub scope: QueryScope,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub header: EmbeddingHeader,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

pub fn write_embeddings(path: &Path, file: &EmbeddingFile) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(serde_json::to_string(&file.header)?.as_bytes());
    out.push(b'\n');
    for (id, v) in file.ids.iter().zip(&file.vectors) {
        if v.len() != file.header.dimension {
            return Err(Error::DimensionMismatch {
                expected: file.header.dimension,
                got: v.len(),
            });
        }
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingFile> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
    let bad = |reason: &str| Error::InvalidArtifact(format!("{}: {reason}", path.display()));
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("bad magic"))?;
    let eol = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
    let header: EmbeddingHeader = serde_json::from_slice(&rest[..eol]).map_err(|e| bad(&e.to_string()))?;
    let mut cur = &rest[eol + 1..];
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated"));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    let mut ids = Vec::with_capacity(header.rows);
    let mut vectors = Vec::with_capacity(header.rows);
    for _ in 0..header.rows {
        let len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let id = std::str::from_utf8(take(len)?).map_err(|_| bad("id is not utf-8"))?.to_string();
        let raw = take(header.dimension * 4)?;
        let v = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        ids.push(id);
        vectors.push(v);
    }
    if !cur.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(EmbeddingFile { header, ids, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        let file = EmbeddingFile {
            header: EmbeddingHeader {
                encoder_id: "enc".into(),
                dimension: 3,
                scope: QueryScope::FullHistory,
                rows: 2,
            },
            ids: vec!["d:1".into(), "d:3".into()],
            vectors: vec![vec![1.0, 2.0, 3.0], vec![-0.5, 0.0, 0.25]],
        };
        write_embeddings(&path, &file).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), file);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        fs::write(&path, b"nope\n{}\n").unwrap();
        assert!(matches!(read_embeddings(&path), Err(Error::InvalidArtifact(_))));
    }
}
