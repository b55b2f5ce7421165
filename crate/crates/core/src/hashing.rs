//! Content hashes used for cache keys, prompt ids and run manifests.

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Git-style object hash: `sha256("blob {len}\0" ++ content)`.
pub fn blob_hash(content: impl AsRef<[u8]>) -> String {
    let content = content.as_ref();
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", content.len()).as_bytes());
    hasher.update(content);
    hex::encode(hasher.finalize())
}

/// Hash of several fields, separated so that field boundaries are unambiguous.
pub fn fields_hash(fields: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for field in fields {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    hex::encode(hasher.finalize())
}
