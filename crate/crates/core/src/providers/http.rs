//! HTTP-backed providers: a chat-completion-style LLM client, a web search
//! client, and a page fetcher.
//!
//! All of them talk through the [`HttpTransport`] trait so retry behavior
//! can be tested with a fault-injecting fake; [`ReqwestTransport`] is the
//! real implementation.

use super::{
    finalize_results, with_retry, CompletionProvider, CompletionRequest, FetchProvider,
    ProviderConfig, ProviderError, SearchProvider, DEFAULT_FETCH_CHAR_CAP,
};
use crate::domain::{SourceDoc, SourceRef};
use serde::Deserialize;
use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

/// A raw HTTP response.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

impl TransportResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
        }
    }
}

/// Minimal HTTP surface the providers need. Errors are transport-level
/// (connection refused, timeout) and always retryable; HTTP status handling
/// happens above this trait.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<TransportResponse, String>;

    fn get(&self, url: &str, timeout: Duration) -> Result<TransportResponse, String>;
}

/// Blocking reqwest-backed transport.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<TransportResponse, String> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(TransportResponse { status, body })
    }

    fn get(&self, url: &str, timeout: Duration) -> Result<TransportResponse, String> {
        let resp = self
            .client
            .get(url)
            .timeout(timeout)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(TransportResponse { status, body })
    }
}

/// Scripted transport for tests: pops one scripted outcome per call and
/// records every call it served.
#[derive(Default)]
pub struct FakeTransport {
    script: Mutex<VecDeque<Result<TransportResponse, String>>>,
    calls: Mutex<Vec<String>>,
}

impl FakeTransport {
    pub fn new(script: Vec<Result<TransportResponse, String>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Urls of the calls served so far, in order.
    pub fn call_log(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    fn next(&self, url: &str) -> Result<TransportResponse, String> {
        self.calls.lock().unwrap().push(url.to_string());
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err("fake transport script exhausted".to_string()))
    }
}

impl HttpTransport for FakeTransport {
    fn post_json(
        &self,
        url: &str,
        _bearer: Option<&str>,
        _body: &serde_json::Value,
        _timeout: Duration,
    ) -> Result<TransportResponse, String> {
        self.next(url)
    }

    fn get(&self, url: &str, timeout: Duration) -> Result<TransportResponse, String> {
        let _ = timeout;
        self.next(url)
    }
}

fn resolve_credential(cfg: &ProviderConfig) -> Result<Option<String>, ProviderError> {
    if cfg.credential_env_var.is_empty() {
        return Ok(None);
    }
    match std::env::var(&cfg.credential_env_var) {
        Ok(value) => Ok(Some(value)),
        Err(_) => Err(ProviderError::AuthMissing {
            var: cfg.credential_env_var.clone(),
        }),
    }
}

enum HttpCallError {
    Transient(String),
    Malformed(String),
}

impl std::fmt::Display for HttpCallError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpCallError::Transient(s) | HttpCallError::Malformed(s) => write!(f, "{s}"),
        }
    }
}

/// Classifies a transport outcome: connection errors and 5xx/429 statuses
/// are transient; 4xx is a malformed request and is never retried.
fn classify(result: Result<TransportResponse, String>) -> Result<String, HttpCallError> {
    match result {
        Err(e) => Err(HttpCallError::Transient(e)),
        Ok(resp) if resp.status == 429 || resp.status >= 500 => Err(HttpCallError::Transient(
            format!("status {}", resp.status),
        )),
        Ok(resp) if resp.status >= 400 => Err(HttpCallError::Malformed(format!(
            "status {}: {}",
            resp.status,
            resp.body.chars().take(200).collect::<String>()
        ))),
        Ok(resp) => Ok(resp.body),
    }
}

fn post_with_retry(
    transport: &dyn HttpTransport,
    cfg: &ProviderConfig,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Result<String, ProviderError> {
    with_retry(
        &cfg.retry,
        |e| matches!(e, HttpCallError::Transient(_)),
        || classify(transport.post_json(&cfg.endpoint, bearer, body, cfg.timeout)),
    )
    .map_err(|e| match e {
        // A non-retryable classification surfaces as MalformedResponse from
        // with_retry; relabel it as the request-side error it is.
        ProviderError::MalformedResponse(msg) => ProviderError::MalformedRequest(msg),
        other => other,
    })
}

/// Chat-completion-style HTTP provider.
///
/// Request: `{"model", "messages": [{"role","content"}...], "temperature",
/// "n", "max_tokens"}`. Response: `{"choices": [{"message": {"content"}}]}`.
pub struct HttpLlm<T: HttpTransport> {
    cfg: ProviderConfig,
    transport: T,
}

impl<T: HttpTransport> HttpLlm<T> {
    pub fn new(cfg: ProviderConfig, transport: T) -> Self {
        Self { cfg, transport }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl<T: HttpTransport> CompletionProvider for HttpLlm<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        req.validate()?;
        let bearer = resolve_credential(&self.cfg)?;
        let body = serde_json::json!({
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": req.system_preamble},
                {"role": "user", "content": req.prompt},
            ],
            "temperature": req.temperature,
            "n": req.sample_count,
            "max_tokens": req.max_tokens,
        });
        let raw = post_with_retry(&self.transport, &self.cfg, bearer.as_deref(), &body)?;
        let parsed: ChatResponse = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::MalformedResponse(format!("bad completion payload: {e}")))?;
        if parsed.choices.len() != req.sample_count {
            return Err(ProviderError::MalformedResponse(format!(
                "expected {} choices, got {}",
                req.sample_count,
                parsed.choices.len()
            )));
        }
        Ok(parsed.choices.into_iter().map(|c| c.message.content).collect())
    }
}

/// HTTP search provider.
///
/// Request: `{"query", "count"}`. Response: `{"results": [{"title", "url",
/// "snippet"}...]}` in provider rank order.
pub struct HttpSearch<T: HttpTransport> {
    cfg: ProviderConfig,
    transport: T,
}

impl<T: HttpTransport> HttpSearch<T> {
    pub fn new(cfg: ProviderConfig, transport: T) -> Self {
        Self { cfg, transport }
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    #[serde(default)]
    title: String,
    url: String,
    #[serde(default)]
    snippet: String,
}

impl<T: HttpTransport> SearchProvider for HttpSearch<T> {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SourceRef>, ProviderError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let bearer = resolve_credential(&self.cfg)?;
        let body = serde_json::json!({ "query": query, "count": k });
        let raw = post_with_retry(&self.transport, &self.cfg, bearer.as_deref(), &body)?;
        let parsed: SearchResponse = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::MalformedResponse(format!("bad search payload: {e}")))?;
        let refs = parsed
            .results
            .into_iter()
            .map(|hit| SourceRef {
                url: hit.url,
                title: hit.title,
                snippet: hit.snippet,
                rank: 0,
            })
            .collect();
        Ok(finalize_results(refs, k))
    }
}

/// Plain GET fetcher with a character cap. Fetch failures are soft: the
/// caller skips the document and continues.
pub struct HttpFetch<T: HttpTransport> {
    transport: T,
    timeout: Duration,
    retry: super::RetryPolicy,
    char_cap: usize,
}

impl<T: HttpTransport> HttpFetch<T> {
    pub fn new(transport: T, timeout: Duration, retry: super::RetryPolicy) -> Self {
        Self {
            transport,
            timeout,
            retry,
            char_cap: DEFAULT_FETCH_CHAR_CAP,
        }
    }

    pub fn with_char_cap(mut self, cap: usize) -> Self {
        self.char_cap = cap;
        self
    }
}

impl<T: HttpTransport> FetchProvider for HttpFetch<T> {
    fn fetch(&self, source: &SourceRef) -> Result<SourceDoc, ProviderError> {
        if source.url.is_empty() {
            return Err(ProviderError::MalformedRequest("empty url".to_string()));
        }
        let result = with_retry(
            &self.retry,
            |e| matches!(e, HttpCallError::Transient(_)),
            || classify(self.transport.get(&source.url, self.timeout)),
        );
        let full = result.map_err(|e| ProviderError::FetchFailed {
            url: source.url.clone(),
            reason: e.to_string(),
        })?;
        let truncated = full.chars().count() > self.char_cap;
        let body = if truncated {
            full.chars().take(self.char_cap).collect()
        } else {
            full
        };
        Ok(SourceDoc {
            source: source.clone(),
            body,
            fetched_at: 0,
            truncated,
        })
    }
}
