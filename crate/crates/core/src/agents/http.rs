//! OpenAI-compatible chat-completions client.
//!
//! Transient failures (connection errors, 429, 5xx) are retried with
//! exponential backoff up to `RetryPolicy::max_retries`; any other non-2xx
//! status fails immediately. Requests are gated by an in-flight limit and a
//! minimum spacing between request starts.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{AgentError, ChatBackend, ChatRequest, ChatTranscript, GenerationConfig, Usage};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 4, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    /// Requests per minute; `None` disables spacing.
    pub rate_per_minute: Option<u32>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_in_flight: 8,
            rate_per_minute: None,
        }
    }
}

impl EndpointConfig {
    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

pub trait HttpTransport: Send + Sync {
    /// POSTs a JSON body. `Err` means the exchange itself failed.
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<HttpReply, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        Self { agent }
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<HttpReply, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(body.to_string()).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

struct Gate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|p| p.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

pub struct OpenAiClient<T = UreqTransport> {
    config: EndpointConfig,
    api_key: Option<String>,
    transport: T,
    gate: Gate,
    next_slot: Mutex<Option<Instant>>,
}

impl OpenAiClient<UreqTransport> {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: EndpointConfig) -> Self {
        let api_key = config.api_key_env.as_deref().and_then(|var| std::env::var(var).ok());
        let transport = UreqTransport::new(config.timeout);
        Self::with_transport(config, api_key, transport)
    }
}

impl<T: HttpTransport> OpenAiClient<T> {
    pub fn with_transport(config: EndpointConfig, api_key: Option<String>, transport: T) -> Self {
        let gate = Gate::new(config.max_in_flight);
        Self { config, api_key, transport, gate, next_slot: Mutex::new(None) }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn pace(&self) {
        let Some(rpm) = self.config.rate_per_minute.filter(|&r| r > 0) else {
            return;
        };
        let spacing = Duration::from_secs(60) / rpm;
        let wait = {
            let mut slot = self.next_slot.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + spacing);
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }

    fn body(req: &ChatRequest, cfg: &GenerationConfig) -> Value {
        let mut messages = Vec::new();
        if !req.system.is_empty() {
            messages.push(json!({ "role": "system", "content": req.system }));
        }
        messages.push(json!({ "role": "user", "content": req.user }));
        let mut body = json!({
            "model": cfg.model,
            "messages": messages,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        });
        if let Some(seed) = cfg.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn decode(body: &str) -> Result<(String, Usage), AgentError> {
        let v: Value = serde_json::from_str(body).map_err(|e| AgentError::Protocol(e.to_string()))?;
        let content = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| AgentError::Protocol("missing choices[0].message.content".into()))?;
        let usage = Usage {
            prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        };
        Ok((content.to_string(), usage))
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl<T: HttpTransport> ChatBackend for OpenAiClient<T> {
    fn complete(&self, req: &ChatRequest, cfg: &GenerationConfig) -> Result<ChatTranscript, AgentError> {
        let _permit = self.gate.acquire();
        let url = self.config.completions_url();
        let body = Self::body(req, cfg);
        let started = Instant::now();
        let mut last = String::new();
        let attempts = self.config.retry.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.config.retry.delay(attempt - 1));
            }
            self.pace();
            match self.transport.post_json(&url, self.api_key.as_deref(), &body) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    let (raw, usage) = Self::decode(&reply.body)?;
                    return Ok(ChatTranscript {
                        role: req.role,
                        model: cfg.model.clone(),
                        system: req.system.clone(),
                        user: req.user.clone(),
                        raw,
                        usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                        retries: attempt,
                        temperature: cfg.temperature,
                        seed: cfg.seed,
                    });
                }
                Ok(reply) if retryable(reply.status) => last = format!("status {}: {}", reply.status, reply.body),
                Ok(reply) => return Err(AgentError::Endpoint { status: reply.status, body: reply.body }),
                Err(e) => last = e,
            }
        }
        Err(AgentError::Transport { attempts, last })
    }
}
