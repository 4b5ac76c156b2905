//! Chat-completion client with retries, bounded concurrency and an on-disk
//! response cache.

mod cache;
mod retry;

use std::fmt;
use std::net::IpAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use reqwest::Url;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use cache::{cache_key, CacheEntry, ResponseCache};
pub use retry::{is_retryable_status, RetryPolicy};

use crate::error::{Error, Result};

const ERROR_BODY_LIMIT: usize = 512;

fn default_timeout() -> f64 {
    60.0
}

/// Where and how to reach a model. The key itself is read from the
/// environment variable named by `api_key_env` and is never stored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model_id: String,
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl ModelEndpoint {
    pub fn new(
        base_url: impl Into<String>,
        model_id: impl Into<String>,
        api_key_env: impl Into<String>,
    ) -> Self {
        ModelEndpoint {
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key_env: api_key_env.into(),
            timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let ep: ModelEndpoint = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        ep.validate()?;
        Ok(ep)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Absolute HTTPS, or plain HTTP to a loopback host.
    pub fn validate(&self) -> Result<()> {
        self.completions_url()?;
        if self.model_id.trim().is_empty() {
            return Err(Error::Config("model_id is empty".into()));
        }
        if self.api_key_env.trim().is_empty() {
            return Err(Error::Config("api_key_env is empty".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config(format!(
                "timeout_secs must be positive, got {}",
                self.timeout_secs
            )));
        }
        self.retry.validate()
    }

    pub fn completions_url(&self) -> Result<Url> {
        let base = Url::parse(&self.base_url)
            .map_err(|e| Error::Config(format!("base_url `{}`: {e}", self.base_url)))?;
        match base.scheme() {
            "https" => {}
            "http" if is_loopback(&base) => {}
            other => {
                return Err(Error::Config(format!(
                    "base_url must use https (http is accepted only for loopback hosts), got {other}://"
                )))
            }
        }
        let joined = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        Url::parse(&joined).map_err(|e| Error::Config(e.to_string()))
    }
}

fn is_loopback(url: &Url) -> bool {
    let Some(host) = url.host_str() else {
        return false;
    };
    let bare = host.trim_start_matches('[').trim_end_matches(']');
    host.eq_ignore_ascii_case("localhost")
        || bare.parse::<IpAddr>().is_ok_and(|ip| ip.is_loopback())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "GenerationRequest::default_max_tokens")]
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub const DEFAULT_MAX_TOKENS: u32 = 256;

    fn default_max_tokens() -> u32 {
        Self::DEFAULT_MAX_TOKENS
    }

    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: Self::DEFAULT_MAX_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(Error::InvalidInput("prompt is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidInput("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Completion text exactly as returned; may be empty.
    pub text: String,
    pub from_cache: bool,
    /// Number of HTTP attempts made; 0 for cache hits.
    pub attempt_count: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

/// Pulls `choices[0].message.content` out of a response body. A null
/// content counts as the empty string.
pub fn extract_completion(body: &Value) -> Result<String> {
    let message = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| Error::Transport("response has no choices[0].message".into()))?;
    match message.get("content") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Null) | None => Ok(String::new()),
        Some(other) => Err(Error::Transport(format!(
            "unexpected content type in response: {other}"
        ))),
    }
}

pub struct Gateway {
    endpoint: ModelEndpoint,
    url: Url,
    client: reqwest::Client,
    api_key: String,
    network_calls: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("endpoint", &self.endpoint)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl Gateway {
    /// Reads the API key from the environment variable the endpoint names.
    pub fn from_env(endpoint: ModelEndpoint) -> Result<Self> {
        let key = std::env::var(&endpoint.api_key_env).map_err(|_| {
            Error::Config(format!(
                "environment variable {} is not set",
                endpoint.api_key_env
            ))
        })?;
        Self::with_api_key(endpoint, key)
    }

    pub fn with_api_key(endpoint: ModelEndpoint, api_key: String) -> Result<Self> {
        endpoint.validate()?;
        if api_key.trim().is_empty() {
            return Err(Error::Config(format!(
                "environment variable {} is empty",
                endpoint.api_key_env
            )));
        }
        let url = endpoint.completions_url()?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Gateway {
            endpoint,
            url,
            client,
            api_key,
            network_calls: AtomicU64::new(0),
        })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    /// HTTP requests sent by this gateway so far, retries included.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::Relaxed)
    }

    /// One completion, retrying rate limits, server errors and transport
    /// failures. Other client errors fail at once.
    pub async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        let (result, _) = self.generate_raw(request).await?;
        Ok(result)
    }

    async fn generate_raw(&self, request: &GenerationRequest) -> Result<(GenerationResult, Value)> {
        request.validate()?;
        let body = json!({
            "model": self.endpoint.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let policy = self.endpoint.retry;
        let started = Instant::now();
        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 1..=policy.max_attempts {
            self.network_calls.fetch_add(1, Ordering::Relaxed);
            match self
                .client
                .post(self.url.clone())
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .await
            {
                Ok(resp) if resp.status().is_success() => {
                    let raw: Value = resp
                        .json()
                        .await
                        .map_err(|e| Error::Transport(e.to_string()))?;
                    let text = extract_completion(&raw)?;
                    let result = GenerationResult {
                        text,
                        from_cache: false,
                        attempt_count: attempt,
                        latency_ms: Some(started.elapsed().as_millis() as u64),
                    };
                    return Ok((result, raw));
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let mut text = resp.text().await.unwrap_or_default();
                    truncate_at_char(&mut text, ERROR_BODY_LIMIT);
                    if !is_retryable_status(status) {
                        return Err(Error::Http { status, body: text });
                    }
                    log::debug!("attempt {attempt}: HTTP {status}");
                    last_status = Some(status);
                    last_message = format!("HTTP {status}: {text}");
                }
                Err(e) => {
                    log::debug!("attempt {attempt}: {e}");
                    last_status = None;
                    last_message = e.without_url().to_string();
                }
            }
            if attempt < policy.max_attempts {
                let wait = policy.delay(attempt, &mut rand::thread_rng());
                tokio::time::sleep(wait).await;
            }
        }
        Err(Error::RetriesExhausted {
            attempts: policy.max_attempts,
            status: last_status,
            message: last_message,
        })
    }

    /// Looks the request up in `cache` first; on a miss calls the endpoint
    /// and stores the verbatim response.
    pub async fn generate_cached(
        &self,
        request: &GenerationRequest,
        cache: &ResponseCache,
    ) -> Result<GenerationResult> {
        request.validate()?;
        let key = cache_key(&self.endpoint.model_id, request);
        if let Some(entry) = cache.get(&key) {
            return Ok(GenerationResult {
                text: entry.text,
                from_cache: true,
                attempt_count: 0,
                latency_ms: None,
            });
        }
        let (result, raw) = self.generate_raw(request).await?;
        cache.put(&CacheEntry {
            key,
            model_id: self.endpoint.model_id.clone(),
            prompt: request.prompt.clone(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            text: result.text.clone(),
            response: raw,
        })?;
        Ok(result)
    }

    /// Runs every request with at most `concurrency_limit` in flight.
    /// Results come back in input order; a failed item does not stop the
    /// rest.
    pub async fn batch_generate(
        &self,
        requests: &[GenerationRequest],
        concurrency_limit: usize,
        cache: Option<&ResponseCache>,
    ) -> Result<Vec<Result<GenerationResult>>> {
        if concurrency_limit == 0 {
            return Err(Error::InvalidInput(
                "concurrency limit must be at least 1".into(),
            ));
        }
        let results = stream::iter(requests)
            .map(|req| async move {
                match cache {
                    Some(c) => self.generate_cached(req, c).await,
                    None => self.generate(req).await,
                }
            })
            .buffered(concurrency_limit)
            .collect()
            .await;
        Ok(results)
    }
}

fn truncate_at_char(s: &mut String, max: usize) {
    if s.len() > max {
        let mut cut = max;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
}
