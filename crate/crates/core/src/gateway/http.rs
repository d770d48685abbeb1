//! OpenAI-compatible chat-completions client.
//!
//! Request body: `{"model", "messages": [{"role", "content"}], "temperature",
//! "max_tokens"}`; the reply text is read from `choices[0].message.content`.
//! HTTP 429 and 5xx are retried with exponential backoff; requests are paced
//! by a token bucket shared across worker threads.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use reqwest::blocking::Client;
use serde::Serialize;

use super::{Backend, BackendConfig, BackendReply, GatewayError};
use crate::prompt::{Message, PromptSpec};

const BODY_EXCERPT_BYTES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: f64,
    /// Relative jitter; 0.2 means each delay is scaled by a factor in [0.8, 1.2].
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base_delay: Duration::from_millis(500),
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Nominal delay before retry number `attempt` (0-based), without jitter.
    pub fn nominal_delay(&self, attempt: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(attempt as i32))
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let scale = if self.jitter > 0.0 {
            rand::rng().random_range(1.0 - self.jitter..=1.0 + self.jitter)
        } else {
            1.0
        };
        self.nominal_delay(attempt).mul_f64(scale)
    }
}

/// Token bucket with capacity `burst` refilled at `rate` tokens per second.
/// `acquire` reserves a token immediately and sleeps off any deficit, so
/// concurrent callers queue in arrival order.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate: f64, burst: f64) -> Self {
        TokenBucket {
            rate,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut state = self.state.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let (tokens, last) = *state;
            let refilled = (tokens + now.duration_since(last).as_secs_f64() * self.rate).min(self.burst);
            let left = refilled - 1.0;
            *state = (left, now);
            if left < 0.0 {
                Duration::from_secs_f64(-left / self.rate)
            } else {
                Duration::ZERO
            }
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
}

pub struct HttpBackend {
    client: Client,
    endpoint_url: String,
    model_name: String,
    temperature: f64,
    max_tokens: u32,
    api_key: String,
    max_retries: u32,
    retry: RetryPolicy,
    limiter: TokenBucket,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint_url", &self.endpoint_url)
            .field("model_name", &self.model_name)
            .finish_non_exhaustive()
    }
}

fn is_loopback(url: &str) -> bool {
    reqwest::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(str::to_owned))
        .is_some_and(|h| h == "localhost" || h == "127.0.0.1" || h == "[::1]")
}

impl HttpBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env_var)
            .map_err(|_| GatewayError::MissingApiKey(cfg.api_key_env_var.clone()))?;
        let endpoint_url = cfg.endpoint_url.clone().unwrap_or_default();
        let mut builder = Client::builder().timeout(Duration::from_millis(cfg.timeout_ms));
        if is_loopback(&endpoint_url) {
            builder = builder.no_proxy();
        }
        let client = builder.build().map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint_url,
            model_name: cfg.model_name.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            api_key,
            max_retries: cfg.max_retries,
            retry: RetryPolicy::default(),
            limiter: TokenBucket::new(cfg.max_requests_per_second, 1.0),
        })
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn parse_reply(&self, body: &str) -> Result<(String, String), GatewayError> {
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|_| GatewayError::MalformedResponse("JSON body".into()))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| GatewayError::MalformedResponse("choices[0].message.content".into()))?;
        let backend_id = value.get("model").and_then(|m| m.as_str()).unwrap_or(&self.model_name);
        Ok((content.to_string(), backend_id.to_string()))
    }
}

fn excerpt(body: &str) -> String {
    let mut end = body.len().min(BODY_EXCERPT_BYTES);
    while !body.is_char_boundary(end) {
        end -= 1;
    }
    body[..end].to_string()
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, GatewayError> {
        let request = ChatRequest {
            model: &self.model_name,
            messages: &prompt.messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let started = Instant::now();
        let mut last_status = 0;
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            self.limiter.acquire();
            let response = self
                .client
                .post(&self.endpoint_url)
                .bearer_auth(&self.api_key)
                .json(&request)
                .send()
                .map_err(|e| {
                    if e.is_timeout() {
                        GatewayError::Timeout
                    } else {
                        GatewayError::Transport(e.to_string())
                    }
                })?;
            let status = response.status();
            let body = response.text().map_err(|e| {
                if e.is_timeout() {
                    GatewayError::Timeout
                } else {
                    GatewayError::Transport(e.to_string())
                }
            })?;
            if status.is_success() {
                let (text, backend_id) = self.parse_reply(&body)?;
                return Ok(BackendReply {
                    text,
                    backend_id,
                    latency_ms: started.elapsed().as_millis() as u64,
                });
            }
            if status.as_u16() == 429 || status.is_server_error() {
                log::warn!("attempt {} got HTTP {}", attempt + 1, status.as_u16());
                last_status = status.as_u16();
                continue;
            }
            return Err(GatewayError::HttpStatus {
                code: status.as_u16(),
                body: excerpt(&body),
            });
        }
        Err(GatewayError::RetriesExhausted {
            attempts: self.max_retries + 1,
            last_status,
        })
    }
}
