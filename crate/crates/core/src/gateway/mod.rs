//! Sends prompts to a chat-completion backend with an on-disk response
//! cache keyed by request content.
//!
//! Two backends exist: an OpenAI-compatible HTTP endpoint
//! ([`http::HttpBackend`]) and a deterministic lexicon-driven mock
//! ([`mock::MockBackend`]) used by tests and dry runs.

pub mod cache;
pub mod http;
pub mod mock;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{Message, PromptSpec};

pub use cache::{CacheEntry, DiskCache, RequestParams};
pub use http::{HttpBackend, RetryPolicy, TokenBucket};
pub use mock::{LexiconEntry, MockBackend, MockRules};

pub const DEFAULT_API_KEY_ENV: &str = "STANCE_HARNESS_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {code}: {body}")]
    HttpStatus { code: u16, body: String },
    #[error("malformed response: missing {0}")]
    MalformedResponse(String),
    #[error("gave up after {attempts} attempts, last status {last_status}")]
    RetriesExhausted { attempts: u32, last_status: u16 },
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cache entry {0} is corrupt")]
    CacheCorrupt(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default = "defaults::model_name")]
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "defaults::max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "defaults::timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: u32,
    #[serde(default = "defaults::max_requests_per_second")]
    pub max_requests_per_second: f64,
    #[serde(default = "defaults::api_key_env_var")]
    pub api_key_env_var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockRules>,
}

mod defaults {
    pub fn model_name() -> String {
        "mock".into()
    }
    pub fn max_tokens() -> u32 {
        256
    }
    pub fn timeout_ms() -> u64 {
        60_000
    }
    pub fn max_retries() -> u32 {
        3
    }
    pub fn max_requests_per_second() -> f64 {
        2.0
    }
    pub fn api_key_env_var() -> String {
        super::DEFAULT_API_KEY_ENV.into()
    }
}

impl BackendConfig {
    pub fn mock(rules: MockRules) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint_url: None,
            model_name: defaults::model_name(),
            temperature: 0.0,
            max_tokens: defaults::max_tokens(),
            timeout_ms: defaults::timeout_ms(),
            max_retries: defaults::max_retries(),
            max_requests_per_second: defaults::max_requests_per_second(),
            api_key_env_var: defaults::api_key_env_var(),
            mock: Some(rules),
        }
    }

    pub fn http(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            model_name: model_name.into(),
            mock: None,
            ..Self::mock(MockRules::default())
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidConfig(m.to_string()));
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must be within [0, 2]");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        if !(self.max_requests_per_second.is_finite() && self.max_requests_per_second > 0.0) {
            return bad("max_requests_per_second must be positive");
        }
        if self.kind == BackendKind::Http {
            if self.endpoint_url.as_deref().is_none_or(str::is_empty) {
                return bad("http backend requires endpoint_url");
            }
            if self.model_name.trim().is_empty() {
                return bad("http backend requires model_name");
            }
        }
        if let Some(rules) = &self.mock {
            rules.validate().map_err(GatewayError::InvalidConfig)?;
        }
        Ok(())
    }

    /// SHA-256 over the compact JSON of
    /// `{"kind","model_name","temperature","max_tokens","messages"}` in that order.
    pub fn request_key(&self, prompt: &PromptSpec) -> String {
        #[derive(Serialize)]
        struct KeyMaterial<'a> {
            kind: &'a str,
            model_name: &'a str,
            temperature: f64,
            max_tokens: u32,
            messages: &'a [Message],
        }
        let bytes = serde_json::to_vec(&KeyMaterial {
            kind: self.kind.as_str(),
            model_name: &self.model_name,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            messages: &prompt.messages,
        })
        .expect("key material serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, GatewayError>;
}

/// Builds the backend described by `cfg`. For HTTP the API key is read from
/// the configured environment variable here and held only in memory.
pub fn backend_from_config(cfg: &BackendConfig) -> Result<Arc<dyn Backend>, GatewayError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::Mock => Arc::new(MockBackend::new(cfg.mock.clone().unwrap_or_default())),
        BackendKind::Http => Arc::new(HttpBackend::from_config(cfg)?),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub hit: bool,
    pub backend_id: String,
    /// Backend-reported latency for misses, 0 for cache hits.
    pub latency_ms: u64,
}

pub struct Gateway {
    config: BackendConfig,
    backend: Arc<dyn Backend>,
    cache: DiskCache,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Gateway {
    pub fn new(config: BackendConfig, backend: Arc<dyn Backend>, cache_dir: &Path) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway {
            config,
            backend,
            cache: DiskCache::open(cache_dir)?,
            inflight: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_config(config: BackendConfig, cache_dir: &Path) -> Result<Self, GatewayError> {
        let backend = backend_from_config(&config)?;
        Self::new(config, backend, cache_dir)
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn cache(&self) -> &DiskCache {
        &self.cache
    }

    /// Uncached backend call.
    pub fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, GatewayError> {
        self.backend.complete(prompt)
    }

    /// Returns the cached reply for this exact request if present, otherwise
    /// calls the backend once (even under concurrent identical requests) and
    /// persists the reply.
    pub fn cached_complete(&self, prompt: &PromptSpec) -> Result<Completion, GatewayError> {
        let key = self.config.request_key(prompt);
        if let Some(entry) = self.cache.get(&key)? {
            return Ok(hit(entry));
        }

        let slot = {
            let mut table = self.inflight.lock().expect("inflight table poisoned");
            table.entry(key.clone()).or_default().clone()
        };
        let _guard = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(entry) = self.cache.get(&key)? {
            return Ok(hit(entry));
        }
        let result = self.backend.complete(prompt).and_then(|reply| {
            let entry = CacheEntry {
                key: key.clone(),
                raw_output: reply.text.clone(),
                backend_id: reply.backend_id.clone(),
                created_at: chrono::Utc::now(),
                request_params: RequestParams {
                    model_name: self.config.model_name.clone(),
                    temperature: self.config.temperature,
                    max_tokens: self.config.max_tokens,
                },
            };
            self.cache.put(&entry)?;
            Ok(Completion {
                text: reply.text,
                hit: false,
                backend_id: reply.backend_id,
                latency_ms: reply.latency_ms,
            })
        });
        self.inflight.lock().expect("inflight table poisoned").remove(&key);
        result
    }
}

fn hit(entry: CacheEntry) -> Completion {
    Completion {
        text: entry.raw_output,
        hit: true,
        backend_id: entry.backend_id,
        latency_ms: 0,
    }
}
