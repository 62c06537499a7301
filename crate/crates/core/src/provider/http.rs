use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use ndarray::Array2;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::limiter::{Clock, RateLimiter};
use super::{parse_completion, render_prompt, Provider, ProviderConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Status(u16, String),
    Other(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Other(_) => true,
            TransportError::Status(code, _) => *code == 429 || *code >= 500,
        }
    }
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Timeout => write!(f, "request timed out"),
            TransportError::Status(code, body) => write!(f, "HTTP {code}: {body}"),
            TransportError::Other(m) => write!(f, "{m}"),
        }
    }
}

/// One JSON POST with bearer authentication.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> std::result::Result<Value, TransportError>;
}

#[derive(Debug)]
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout_secs: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> std::result::Result<Value, TransportError> {
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                other => TransportError::Other(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Other(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status(status, text));
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Other(format!("invalid JSON response: {e}")))
    }
}

/// Responses stored under the sha256 of the request.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn key(url: &str, body: &Value) -> String {
        let mut h = Sha256::new();
        h.update(url.as_bytes());
        h.update([0]);
        h.update(body.to_string().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let text = std::fs::read_to_string(self.dir.join(format!("{key}.json"))).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, key: &str, value: &Value) -> Result<()> {
        let path = self.dir.join(format!("{key}.json"));
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, value.to_string())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Chat-completion and embedding endpoints behind retries, a rate limit and an optional cache.
pub struct HttpProvider<T, C> {
    cfg: ProviderConfig,
    transport: T,
    limiter: RateLimiter<C>,
    cache: Option<ResponseCache>,
    retries: AtomicU64,
}

impl<T: Transport, C: Clock> HttpProvider<T, C> {
    pub fn new(cfg: ProviderConfig, transport: T, clock: C) -> Result<Self> {
        if cfg.base_url.as_deref().is_none_or(str::is_empty) {
            return Err(Error::Config("http provider requires a base URL".into()));
        }
        let cache = cfg.cache_dir.as_ref().map(ResponseCache::new).transpose()?;
        let limiter = RateLimiter::new(clock, cfg.requests_per_minute);
        Ok(Self {
            cfg,
            transport,
            limiter,
            cache,
            retries: AtomicU64::new(0),
        })
    }

    /// Retries performed so far across all calls.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.base_url.as_deref().unwrap_or_default().trim_end_matches('/'))
    }

    fn api_key(&self) -> Result<String> {
        match std::env::var(&self.cfg.api_key_env) {
            Ok(k) if !k.is_empty() => Ok(k),
            _ => Err(Error::Config(format!(
                "environment variable {} is not set",
                self.cfg.api_key_env
            ))),
        }
    }

    fn call(&self, path: &str, body: Value) -> Result<Value> {
        let url = self.endpoint(path);
        let key = ResponseCache::key(&url, &body);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(hit);
        }
        let api_key = self.api_key()?;
        let mut attempt = 0u32;
        let value = loop {
            self.limiter.acquire();
            match self.transport.post_json(&url, &api_key, &body) {
                Ok(v) => break v,
                Err(e) if e.retryable() && attempt < self.cfg.max_retries => {
                    attempt += 1;
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    log::warn!("{path}: {e}; retry {attempt}/{}", self.cfg.max_retries);
                    self.limiter
                        .clock()
                        .sleep(Duration::from_millis(500u64 << (attempt - 1).min(6)));
                }
                Err(e) => {
                    return Err(Error::Provider(format!(
                        "{path} failed after {} attempts: {e}",
                        attempt + 1
                    )))
                }
            }
        };
        if let Some(c) = &self.cache {
            c.put(&key, &value)?;
        }
        Ok(value)
    }
}

fn malformed(what: &str, v: &Value) -> Error {
    Error::Provider(format!("malformed {what} response: {v}"))
}

impl<T: Transport, C: Clock> Provider for HttpProvider<T, C> {
    fn subdivide(&self, node: &str, scenario: &str) -> Result<Vec<String>> {
        if node.is_empty() {
            return Err(Error::Provider("cannot subdivide an empty node".into()));
        }
        let body = json!({
            "model": self.cfg.chat_model,
            "temperature": 0,
            "messages": [{"role": "user", "content": render_prompt(node, scenario)}],
        });
        let resp = self.call("chat/completions", body)?;
        let content = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("chat", &resp))?;
        parse_completion(content)
    }

    fn embed(&self, texts: &[String]) -> Result<Array2<f64>> {
        if texts.is_empty() {
            return Err(Error::Provider("nothing to embed".into()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.cfg.embed_batch.max(1)) {
            let body = json!({"model": self.cfg.embed_model, "input": chunk});
            let resp = self.call("embeddings", body)?;
            let data = resp
                .get("data")
                .and_then(Value::as_array)
                .filter(|d| d.len() == chunk.len())
                .ok_or_else(|| malformed("embedding", &resp))?;
            let mut items: Vec<(usize, Vec<f64>)> = Vec::with_capacity(chunk.len());
            for (pos, item) in data.iter().enumerate() {
                let idx = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
                let vec = item
                    .get("embedding")
                    .and_then(Value::as_array)
                    .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
                    .ok_or_else(|| malformed("embedding", &resp))?;
                items.push((idx, vec));
            }
            items.sort_by_key(|(i, _)| *i);
            if items.iter().enumerate().any(|(p, (i, _))| p != *i) {
                return Err(malformed("embedding", &resp));
            }
            rows.extend(items.into_iter().map(|(_, v)| v));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Provider("embedding dimensions disagree".into()));
        }
        Array2::from_shape_vec((rows.len(), d), rows.concat()).map_err(|e| Error::shape(e.to_string()))
    }
}
