use std::collections::HashMap;
use std::path::Path;

use serde_json::{json, Value};

use super::GenerationRequest;
use crate::error::{Error, Result};
use crate::http::{post_json, RetryPolicy};

pub const API_BASE_ENV: &str = "TODALIGN_API_BASE";
pub const API_KEY_ENV: &str = "TODALIGN_API_KEY";

/// Something that turns a prompt into raw completion text.
pub trait Completion: Send + Sync {
    fn backend_id(&self) -> String;
    fn complete(&self, request: &GenerationRequest) -> Result<String>;
}

/// OpenAI-compatible chat completions; the prompt is sent as one user message.
pub struct HttpBackend {
    pub base_url: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::new(),
        }
    }

    /// Reads the endpoint and key from the environment.
    pub fn from_env() -> Result<Self> {
        let base = std::env::var(API_BASE_ENV).map_err(|_| Error::Config(format!("{API_BASE_ENV} is not set")))?;
        Ok(Self::new(base, std::env::var(API_KEY_ENV).ok()))
    }
}

impl Completion for HttpBackend {
    fn backend_id(&self) -> String {
        format!("http:{}", self.base_url)
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String> {
        let body = json!({
            "model": request.model_id,
            "messages": [{ "role": "user", "content": request.full_text }],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let url = format!("{}/chat/completions", self.base_url);
        let response = post_json(&self.client, &url, self.api_key.as_deref(), &body, &self.retry)?;
        response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Transport("response has no choices[0].message.content".into()))
    }
}

/// Fixed completions keyed by prompt hash.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    pub responses: HashMap<String, String>,
    /// Returned for prompts without a scripted completion.
    pub default: Option<String>,
}

impl ScriptedBackend {
    pub fn new(responses: HashMap<String, String>) -> Self {
        Self {
            responses,
            default: None,
        }
    }

    /// Loads a JSON object mapping prompt hashes to completions.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Ok(Self::new(serde_json::from_slice(&bytes)?))
    }
}

impl Completion for ScriptedBackend {
    fn backend_id(&self) -> String {
        "scripted".to_string()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String> {
        self.responses
            .get(&request.prompt_hash)
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| Error::ReplayMiss(request.prompt_hash.clone()))
    }
}

/// Serves only from the cache. Strict replay fails on a miss; lenient
/// replay falls back to a scripted backend.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    pub fallback: Option<ScriptedBackend>,
}

impl Completion for ReplayBackend {
    fn backend_id(&self) -> String {
        "replay".to_string()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String> {
        match &self.fallback {
            Some(scripted) => scripted.complete(request),
            None => Err(Error::ReplayMiss(request.cache_key())),
        }
    }
}
