//! Embedding providers.

use std::collections::HashMap;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::store::read_embeddings;
use crate::corpus::canonicalize;
use crate::error::{Error, Result};
use crate::http::{post_json, RetryPolicy};
use crate::parallel::bounded_map;

#[derive(Debug, Clone, Copy)]
pub struct EmbedItem<'a> {
    /// Sample id; used by providers that look vectors up instead of computing them.
    pub key: &'a str,
    pub text: &'a str,
}

pub trait EmbeddingProvider: Send + Sync {
    fn encoder_id(&self) -> String;

    /// One raw (not necessarily normalized) vector per item, in input order.
    fn embed_raw(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>>;
}

/// Scales `v` to unit L2 norm. Zero and non-finite vectors are rejected.
pub fn normalize(v: &mut [f32]) -> std::result::Result<(), String> {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(format!("cannot normalize vector with norm {norm}"));
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(())
}

/// Embeds and L2-normalizes; every vector must share one dimension.
pub fn embed(provider: &dyn EmbeddingProvider, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>> {
    let mut vectors = provider.embed_raw(items)?;
    if vectors.len() != items.len() {
        return Err(Error::Provider {
            index: vectors.len().min(items.len()),
            reason: format!("provider returned {} vectors for {} texts", vectors.len(), items.len()),
        });
    }
    let dimension = vectors.first().map(Vec::len).unwrap_or(0);
    for (index, v) in vectors.iter_mut().enumerate() {
        if v.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                got: v.len(),
            });
        }
        normalize(v).map_err(|reason| Error::Provider { index, reason })?;
    }
    Ok(vectors)
}

/// Deterministic bag-of-tokens embedding: each whitespace token of the
/// canonicalized text adds 1 to a hashed coordinate.
#[derive(Debug, Clone, Copy)]
pub struct StubEmbedder {
    pub dimension: usize,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self { dimension: 256 }
    }
}

impl StubEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self { dimension }
    }

    fn bucket(&self, token: &str) -> usize {
        let digest = Sha256::digest(token.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % self.dimension as u64) as usize
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dimension];
        let text = canonicalize(text);
        let mut any = false;
        for token in text.split_whitespace() {
            v[self.bucket(token)] += 1.0;
            any = true;
        }
        if !any {
            v[self.bucket("<empty>")] = 1.0;
        }
        v
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn encoder_id(&self) -> String {
        format!("stub-bag-of-tokens-{}", self.dimension)
    }

    fn embed_raw(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>> {
        Ok(items.iter().map(|i| self.vector(i.text)).collect())
    }
}

/// Vectors read from an embedding file, looked up by sample id.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbeddings {
    encoder_id: String,
    dimension: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl PrecomputedEmbeddings {
    pub fn load(path: &Path) -> Result<Self> {
        let file = read_embeddings(path)?;
        Ok(Self {
            encoder_id: file.header.encoder_id,
            dimension: file.header.dimension,
            vectors: file.ids.into_iter().zip(file.vectors).collect(),
        })
    }

    pub fn from_map(encoder_id: impl Into<String>, dimension: usize, vectors: HashMap<String, Vec<f32>>) -> Self {
        Self {
            encoder_id: encoder_id.into(),
            dimension,
            vectors,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn encoder_id(&self) -> String {
        self.encoder_id.clone()
    }

    fn embed_raw(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>> {
        items
            .iter()
            .enumerate()
            .map(|(index, item)| {
                self.vectors.get(item.key).cloned().ok_or_else(|| Error::Provider {
                    index,
                    reason: format!("no precomputed vector for `{}`", item.key),
                })
            })
            .collect()
    }
}

/// OpenAI-compatible `/embeddings` endpoint, queried in batches with a
/// bounded number of requests in flight.
pub struct HttpEmbedder {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub batch_size: usize,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            batch_size: 32,
            concurrency: 4,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::new(),
        }
    }

    fn embed_batch(&self, offset: usize, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let body = json!({ "model": self.model, "input": texts });
        let url = format!("{}/embeddings", self.base_url);
        let response = post_json(&self.client, &url, self.api_key.as_deref(), &body, &self.retry)
            .map_err(|e| Error::Provider {
                index: offset,
                reason: e.to_string(),
            })?;
        let data = response
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Provider {
                index: offset,
                reason: "response has no `data` array".into(),
            })?;
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, entry) in data.iter().enumerate() {
            let slot = entry.get("index").and_then(Value::as_u64).map(|i| i as usize).unwrap_or(pos);
            let vector = entry
                .get("embedding")
                .and_then(Value::as_array)
                .map(|xs| xs.iter().filter_map(Value::as_f64).map(|x| x as f32).collect::<Vec<_>>());
            match (out.get_mut(slot), vector) {
                (Some(dst), Some(v)) => *dst = v,
                _ => {
                    return Err(Error::Provider {
                        index: offset + pos,
                        reason: "malformed embedding entry".into(),
                    })
                }
            }
        }
        if let Some(missing) = out.iter().position(Vec::is_empty) {
            return Err(Error::Provider {
                index: offset + missing,
                reason: "no embedding returned".into(),
            });
        }
        Ok(out)
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn encoder_id(&self) -> String {
        self.model.clone()
    }

    fn embed_raw(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>> {
        let texts: Vec<&str> = items.iter().map(|i| i.text).collect();
        let batches: Vec<(usize, &[&str])> = texts
            .chunks(self.batch_size.max(1))
            .enumerate()
            .map(|(b, chunk)| (b * self.batch_size.max(1), chunk))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for result in bounded_map(&batches, self.concurrency, |_, &(offset, chunk)| self.embed_batch(offset, chunk)) {
            out.extend(result?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(text: &str) -> EmbedItem<'_> {
        EmbedItem { key: "k", text }
    }

    #[test]
    fn stub_is_deterministic_and_order_free() {
        let stub = StubEmbedder::new(64);
        let v = embed(&stub, &[item("a b"), item("b a"), item("a b")]).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(v[0], v[2]);
    }

    #[test]
    fn embed_normalizes() {
        let stub = StubEmbedder::new(16);
        for v in embed(&stub, &[item("one two two three"), item("")]).unwrap() {
            let norm: f64 = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn precomputed_missing_key_reports_index() {
        let provider = PrecomputedEmbeddings::from_map("x", 2, HashMap::from([("a".to_string(), vec![1.0, 0.0])]));
        let err = embed(
            &provider,
            &[EmbedItem { key: "a", text: "" }, EmbedItem { key: "b", text: "" }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Provider { index: 1, .. }));
    }

    #[test]
    fn zero_vectors_are_rejected() {
        let mut v = vec![0.0f32; 3];
        assert!(normalize(&mut v).is_err());
    }
}
