//! Clients for the chat model and the embedding service.
//!
//! Both services sit behind small traits with an HTTP implementation and a
//! read-only fixture implementation used for tests and reproducible runs.

mod embed;
mod llm;
mod prompt;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use embed::{
    validate_bundle, EmbeddingBundle, Embedder, FixtureEmbedder, HttpEmbedder, WordVector,
};
pub use llm::{
    CacheEnvelope, CachedChat, ChatBackend, FixtureChat, HttpChat, LlmRequest,
};
pub use prompt::{render_prompt, PromptTemplate, INPUT_SLOT};

/// Hex SHA-256 of a UTF-8 string.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Writes `bytes` to `path` through a sibling temp file and a rename, so a
/// concurrent reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Retry policy for HTTP backends.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub retries: usize,
    pub timeout: Duration,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            timeout: Duration::from_secs(60),
            backoff: Duration::from_millis(500),
        }
    }
}

/// POSTs JSON with `retries + 1` attempts and exponential backoff.
pub(crate) fn post_json_with_retry(
    endpoint: &str,
    api_key: Option<&str>,
    body: &Value,
    policy: &RetryPolicy,
) -> Result<Value> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(policy.timeout))
        .build()
        .into();
    let attempts = policy.retries + 1;
    let mut last_err = String::new();
    let mut timed_out = false;
    for attempt in 0..attempts {
        if attempt > 0 {
            thread::sleep(policy.backoff * (1u32 << (attempt - 1).min(16)));
        }
        let mut req = agent.post(endpoint);
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => match resp.body_mut().read_json::<Value>() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    timed_out = matches!(e, ureq::Error::Timeout(_));
                    last_err = format!("reading response body: {e}");
                }
            },
            Err(e) => {
                timed_out = matches!(e, ureq::Error::Timeout(_));
                last_err = e.to_string();
            }
        }
        log::debug!("attempt {} of {attempts} to {endpoint} failed: {last_err}", attempt + 1);
    }
    if timed_out {
        Err(Error::Timeout {
            attempts,
            message: last_err,
        })
    } else {
        Err(Error::Transport {
            attempts,
            message: last_err,
        })
    }
}
