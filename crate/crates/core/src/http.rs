//! Blocking JSON POST with bounded retries, shared by the HTTP backends.

use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 5,
            initial_backoff: Duration::from_secs(1),
            factor: 2,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * self.factor.saturating_pow(attempt)
    }
}

fn retryable(status: reqwest::StatusCode) -> bool {
    status == reqwest::StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

/// Posts `body` to `url`, retrying transport failures, 429 and 5xx answers
/// with exponential backoff. Other HTTP errors fail immediately.
pub fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
    policy: &RetryPolicy,
) -> Result<Value> {
    let mut last_error = String::new();
    for attempt in 0..policy.attempts.max(1) {
        if attempt > 0 {
            thread::sleep(policy.backoff(attempt - 1));
        }
        let mut request = client.post(url).json(body);
        if let Some(key) = api_key {
            request = request.bearer_auth(key);
        }
        match request.send() {
            Ok(response) => {
                let status = response.status();
                if status.is_success() {
                    return response.json::<Value>().map_err(|e| Error::Transport(e.to_string()));
                }
                let text = response.text().unwrap_or_default();
                last_error = format!("HTTP {status}: {text}");
                if !retryable(status) {
                    break;
                }
            }
            Err(e) => last_error = e.to_string(),
        }
        log::warn!("request to {url} failed (attempt {}): {last_error}", attempt + 1);
    }
    Err(Error::Transport(last_error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let policy = RetryPolicy::default();
        assert_eq!(policy.backoff(0), Duration::from_secs(1));
        assert_eq!(policy.backoff(3), Duration::from_secs(8));
    }
}
