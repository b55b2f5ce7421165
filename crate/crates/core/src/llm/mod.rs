//! Chat-completion generation with caching, bounded concurrency and an audit
//! log, plus parsing of the generated entity list and response.

mod backend;
mod cache;
mod parse;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::EntityMention;
use crate::error::{Error, Result};
use crate::hashing::fields_hash;
use crate::parallel::bounded_map;
use crate::prompt::PromptBundle;

pub use backend::{Completion, HttpBackend, ReplayBackend, ScriptedBackend, API_BASE_ENV, API_KEY_ENV};
pub use cache::{CacheEntry, ResponseCache};
pub use parse::{parse_response, ParsedResponse};

pub const DEFAULT_MAX_TOKENS: u32 = 256;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt_hash: String,
    pub full_text: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub fn new(prompt: &PromptBundle, model_id: impl Into<String>) -> Self {
        Self {
            prompt_hash: prompt.prompt_hash.clone(),
            full_text: prompt.full_text.clone(),
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Cache key over everything that determines the completion.
    pub fn cache_key(&self) -> String {
        fields_hash(&[
            &self.full_text,
            &self.model_id,
            &format!("{:?}", self.temperature),
            &self.max_tokens.to_string(),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub raw_text: String,
    pub parsed_entities: Option<Vec<EntityMention>>,
    pub response_text: String,
    pub parse_fallback: bool,
    pub backend_id: String,
    pub cached: bool,
}

/// JSON-lines record of every request and its outcome.
pub struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self { file: Mutex::new(file) })
    }

    fn record(&self, request: &GenerationRequest, outcome: std::result::Result<&GenerationResult, &Error>) {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let line = match outcome {
            Ok(r) => json!({
                "ts_ms": ts,
                "prompt_hash": request.prompt_hash,
                "model_id": request.model_id,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
                "backend": r.backend_id,
                "cached": r.cached,
                "raw_text": r.raw_text,
            }),
            Err(e) => json!({
                "ts_ms": ts,
                "prompt_hash": request.prompt_hash,
                "model_id": request.model_id,
                "error": e.to_string(),
            }),
        };
        let mut file = self.file.lock().expect("audit log poisoned");
        if let Err(e) = writeln!(file, "{line}") {
            log::warn!("audit log write failed: {e}");
        }
    }
}

/// Cache-first generation against one backend.
pub struct Generator {
    pub backend: Box<dyn Completion>,
    pub cache: Option<ResponseCache>,
    pub audit: Option<AuditLog>,
    /// Tag that introduces the response line, e.g. `assistant`.
    pub role: String,
    pub concurrency: usize,
}

impl Generator {
    pub fn new(backend: Box<dyn Completion>, role: impl Into<String>) -> Self {
        Self {
            backend,
            cache: None,
            audit: None,
            role: role.into(),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    fn finish(&self, raw_text: String, backend_id: String, cached: bool) -> GenerationResult {
        let parsed = parse_response(&raw_text, &self.role);
        GenerationResult {
            raw_text,
            parsed_entities: parsed.entities,
            response_text: parsed.response,
            parse_fallback: parsed.fallback,
            backend_id,
            cached,
        }
    }

    fn generate_inner(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        let key = request.cache_key();
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key)? {
                return Ok(self.finish(entry.raw_text, entry.backend_id, true));
            }
        }
        let raw_text = self.backend.complete(request)?;
        let backend_id = self.backend.backend_id();
        if let Some(cache) = &self.cache {
            cache.put(&CacheEntry {
                key,
                prompt_hash: request.prompt_hash.clone(),
                model_id: request.model_id.clone(),
                temperature: request.temperature,
                max_tokens: request.max_tokens,
                backend_id: backend_id.clone(),
                raw_text: raw_text.clone(),
            })?;
        }
        Ok(self.finish(raw_text, backend_id, false))
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        let result = self.generate_inner(request);
        if let Some(audit) = &self.audit {
            audit.record(request, result.as_ref());
        }
        result
    }

    /// Generates for every request with bounded concurrency, in input order.
    pub fn generate_all(&self, requests: &[GenerationRequest]) -> Vec<Result<GenerationResult>> {
        bounded_map(requests, self.concurrency, |_, r| self.generate(r))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn request(text: &str) -> GenerationRequest {
        GenerationRequest {
            prompt_hash: crate::hashing::sha256_hex(text.as_bytes()),
            full_text: text.to_string(),
            model_id: "m".into(),
            temperature: 0.0,
            max_tokens: 16,
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = request("p");
        let scripted = ScriptedBackend::new(HashMap::from([(r.prompt_hash.clone(), "[]\nsystem: hi".to_string())]));
        let generator = Generator::new(Box::new(scripted), "system").with_cache(ResponseCache::open(dir.path()).unwrap());
        let first = generator.generate(&r).unwrap();
        let second = generator.generate(&r).unwrap();
        assert!(!first.cached && second.cached);
        assert_eq!(first.raw_text, second.raw_text);
        assert_eq!(second.response_text, "hi");

        let replay = Generator::new(Box::new(ReplayBackend::default()), "system").with_cache(ResponseCache::open(dir.path()).unwrap());
        assert_eq!(replay.generate(&r).unwrap().raw_text, first.raw_text);
        assert!(matches!(replay.generate(&request("other")), Err(Error::ReplayMiss(_))));
    }

    #[test]
    fn key_depends_on_every_field() {
        let base = request("p");
        let mut hot = base.clone();
        hot.temperature = 0.7;
        let mut long = base.clone();
        long.max_tokens = 17;
        let mut other = base.clone();
        other.model_id = "n".into();
        let keys = [base.cache_key(), hot.cache_key(), long.cache_key(), other.cache_key()];
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert_ne!(keys[i], keys[j]);
            }
        }
    }

    #[test]
    fn lenient_replay_and_audit() {
        let dir = tempfile::tempdir().unwrap();
        let mut fallback = ScriptedBackend::default();
        fallback.default = Some("assistant: fine".into());
        let audit_path = dir.path().join("audit.jsonl");
        let generator = Generator::new(Box::new(ReplayBackend { fallback: Some(fallback) }), "assistant")
            .with_audit(AuditLog::append(&audit_path).unwrap());
        let results = generator.generate_all(&[request("a"), request("b")]);
        assert!(results.iter().all(|r| r.as_ref().unwrap().response_text == "fine"));
        assert_eq!(std::fs::read_to_string(audit_path).unwrap().lines().count(), 2);
    }
}
