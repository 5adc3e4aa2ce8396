//! Provider contracts for the three external capabilities — text
//! completion, web search, and document fetch — plus deterministic
//! scripted implementations for offline runs and tests.
//!
//! Secrets are never stored in configuration; a config names the
//! environment variable that holds the credential.

mod corpus;
mod http;
mod scripted;

pub use corpus::{FixtureCorpus, FixtureDoc};
pub use http::{
    FakeTransport, HttpFetch, HttpLlm, HttpSearch, HttpTransport, ReqwestTransport,
    TransportResponse,
};
pub use scripted::{CallScript, ScriptRule, ScriptSpec, ScriptedLlm};

use crate::domain::{SourceDoc, SourceRef};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

/// Default character cap applied to fetched document bodies.
pub const DEFAULT_FETCH_CHAR_CAP: usize = 20_000;

/// One completion call.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub system_preamble: String,
    pub max_tokens: usize,
    pub temperature: f64,
    /// Number of samples to draw for the same prompt.
    pub sample_count: usize,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, system_preamble: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            system_preamble: system_preamble.into(),
            max_tokens: 1024,
            temperature: 0.7,
            sample_count: 1,
        }
    }

    pub fn with_samples(mut self, sample_count: usize) -> Self {
        self.sample_count = sample_count;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.sample_count < 1 {
            return Err(ProviderError::MalformedRequest(
                "sample_count must be at least 1".to_string(),
            ));
        }
        if self.temperature < 0.0 {
            return Err(ProviderError::MalformedRequest(
                "temperature must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// Retry behavior for transient transport failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    /// Base delay; attempt k sleeps `backoff_base * 2^(k-1)`.
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base: Duration::from_millis(250),
        }
    }
}

/// Connection settings for one remote provider. Holds the *name* of the
/// environment variable carrying the credential, never the credential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model_name: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub credential_env_var: String,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_name: String::new(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            credential_env_var: "LLM_API_KEY".to_string(),
        }
    }
}

/// Provider failures. Cloneable so scripted providers can replay them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("transport exhausted after {attempts} attempts: {last_error}")]
    TransportExhausted { attempts: usize, last_error: String },
    #[error("credential environment variable {var} is not set")]
    AuthMissing { var: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("fetch failed for {url}: {reason}")]
    FetchFailed { url: String, reason: String },
    #[error("script exhausted: {0}")]
    ScriptExhausted(String),
}

/// Text completion: returns exactly `sample_count` completions.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError>;
}

/// Web search: returns up to `k` results ranked 1..n with unique urls.
pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SourceRef>, ProviderError>;
}

/// Document fetch. `fetched_at` on the returned doc is left at zero; the
/// deliberation loop stamps its own event ordinal.
pub trait FetchProvider: Send + Sync {
    fn fetch(&self, source: &SourceRef) -> Result<SourceDoc, ProviderError>;
}

/// The provider bundle a deliberation run needs.
#[derive(Clone)]
pub struct ProviderSet {
    pub llm: Arc<dyn CompletionProvider>,
    pub search: Arc<dyn SearchProvider>,
    pub fetch: Arc<dyn FetchProvider>,
}

/// Deduplicates by url (first occurrence wins), truncates to `k`, and
/// assigns ranks 1..n. Every search implementation funnels through this.
pub fn finalize_results(raw: Vec<SourceRef>, k: usize) -> Vec<SourceRef> {
    if k == 0 {
        return Vec::new();
    }
    let mut seen: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for mut r in raw {
        if r.url.is_empty() || seen.contains(&r.url) {
            continue;
        }
        seen.push(r.url.clone());
        r.rank = out.len() + 1;
        out.push(r);
        if out.len() == k {
            break;
        }
    }
    out
}

/// Runs `op` up to `policy.max_attempts` times, sleeping exponentially
/// between attempts. Only errors classified transient by `retryable` are
/// retried; others propagate immediately.
pub fn with_retry<T, E: std::fmt::Display>(
    policy: &RetryPolicy,
    retryable: impl Fn(&E) -> bool,
    mut op: impl FnMut() -> Result<T, E>,
) -> Result<T, ProviderError> {
    let attempts = policy.max_attempts.max(1);
    let mut last_error = String::new();
    for attempt in 1..=attempts {
        match op() {
            Ok(value) => return Ok(value),
            Err(e) if retryable(&e) => {
                last_error = e.to_string();
                if attempt < attempts {
                    let delay = policy.backoff_base * 2u32.saturating_pow(attempt as u32 - 1);
                    std::thread::sleep(delay);
                }
            }
            Err(e) => {
                return Err(ProviderError::MalformedResponse(e.to_string()));
            }
        }
    }
    Err(ProviderError::TransportExhausted {
        attempts,
        last_error,
    })
}
