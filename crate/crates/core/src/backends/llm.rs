use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{post_json_with_retry, sha256_hex, write_atomic, RetryPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmRequest {
    pub fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(Error::domain("LLM request has an empty prompt"));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::domain(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Cache key: SHA-256 over (model, prompt, temperature).
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model: &'a str,
            prompt: &'a str,
            temperature: f64,
        }
        let key = serde_json::to_string(&Key {
            model: &self.model,
            prompt: &self.prompt,
            temperature: self.temperature,
        })
        .expect("cache key serializes");
        sha256_hex(&key)
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat_complete(&self, request: &LlmRequest) -> Result<String>;
}

/// On-disk record of one request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEnvelope {
    pub request_hash: String,
    pub response: String,
    pub timestamp: u64,
}

impl CacheEnvelope {
    fn path_in(dir: &Path, hash: &str) -> PathBuf {
        dir.join(format!("{hash}.json"))
    }

    fn load(dir: &Path, hash: &str) -> Result<Option<CacheEnvelope>> {
        let path = Self::path_in(dir, hash);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(serde_json::from_str(&s)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Stores `response` for `request` under `dir`.
    pub fn store(dir: &Path, request: &LlmRequest, response: &str, timestamp: u64) -> Result<()> {
        let hash = request.hash();
        let env = CacheEnvelope {
            request_hash: hash.clone(),
            response: response.to_string(),
            timestamp,
        };
        let bytes = serde_json::to_vec_pretty(&env)?;
        write_atomic(&Self::path_in(dir, &hash), &bytes)
    }
}

/// Chat-completions HTTP client.
#[derive(Debug, Clone)]
pub struct HttpChat {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub policy: RetryPolicy,
}

impl HttpChat {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, policy: RetryPolicy) -> Self {
        HttpChat {
            endpoint: endpoint.into(),
            api_key,
            policy,
        }
    }
}

impl ChatBackend for HttpChat {
    fn chat_complete(&self, request: &LlmRequest) -> Result<String> {
        request.validate()?;
        let body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let resp = post_json_with_retry(&self.endpoint, self.api_key.as_deref(), &body, &self.policy)?;
        resp.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(String::from)
            .ok_or_else(|| {
                Error::Schema(format!(
                    "chat response lacks choices[0].message.content: {resp}"
                ))
            })
    }
}

/// Wraps a backend with a content-addressed disk cache.
pub struct CachedChat<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: ChatBackend> CachedChat<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        CachedChat {
            inner,
            dir: dir.into(),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for CachedChat<B> {
    fn chat_complete(&self, request: &LlmRequest) -> Result<String> {
        request.validate()?;
        let hash = request.hash();
        if let Some(env) = CacheEnvelope::load(&self.dir, &hash)? {
            return Ok(env.response);
        }
        let response = self.inner.chat_complete(request)?;
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        CacheEnvelope::store(&self.dir, request, &response, now)?;
        Ok(response)
    }
}

/// Replays recorded responses from a directory of cache envelopes.
#[derive(Debug, Clone)]
pub struct FixtureChat {
    dir: PathBuf,
}

impl FixtureChat {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureChat { dir: dir.into() }
    }
}

impl ChatBackend for FixtureChat {
    fn chat_complete(&self, request: &LlmRequest) -> Result<String> {
        request.validate()?;
        let hash = request.hash();
        CacheEnvelope::load(&self.dir, &hash)?
            .map(|env| env.response)
            .ok_or(Error::MissingRecording(hash))
    }
}
