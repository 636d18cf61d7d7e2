//! OpenAI-compatible `chat/completions` client with retry and optional pacing.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, BackendError, ChatRequest, ChatResponse};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Other(String),
}

/// One HTTP POST of a JSON body with bearer auth. Returns status and body text.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError>;
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        ReqwestTransport {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .timeout(timeout)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Other(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        Ok((status, text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: u32,
    pub max_attempts: u32,
    pub max_total_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_secs(1),
            factor: 2,
            max_attempts: 5,
            max_total_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base * self.factor.saturating_pow(retry - 1)
    }
}

pub struct HttpChatBackend {
    url: String,
    model: String,
    key: String,
    timeout: Duration,
    min_interval: Duration,
    last_call: Option<Instant>,
    retry: RetryPolicy,
    transport: Box<dyn Transport>,
    sleeper: Box<dyn Sleeper>,
}

impl HttpChatBackend {
    pub fn new(
        base_url: &str,
        model: &str,
        key: String,
        min_interval_ms: u64,
        timeout_secs: u64,
    ) -> Self {
        HttpChatBackend {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            key,
            timeout: Duration::from_secs(timeout_secs),
            min_interval: Duration::from_millis(min_interval_ms),
            last_call: None,
            retry: RetryPolicy::default(),
            transport: Box::new(ReqwestTransport::default()),
            sleeper: Box::new(ThreadSleeper),
        }
    }

    pub fn with_transport(mut self, t: Box<dyn Transport>, s: Box<dyn Sleeper>) -> Self {
        self.transport = t;
        self.sleeper = s;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Request body in the chat-completions format.
    pub fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_text})];
        messages.extend(request.turns.iter().map(|t| json!({"role": t.role, "content": t.content})));
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "n": request.completions,
        })
    }

    fn attempt(&mut self, body: &Value) -> Result<ChatResponse, BackendError> {
        if let Some(last) = self.last_call {
            let since = last.elapsed();
            if since < self.min_interval {
                self.sleeper.sleep(self.min_interval - since);
            }
        }
        let started = Instant::now();
        self.last_call = Some(started);
        let (status, text) = self
            .transport
            .post_json(&self.url, &self.key, body, self.timeout)
            .map_err(|e| match e {
                TransportError::Timeout => BackendError::Timeout,
                TransportError::Other(m) => BackendError::Transport(m),
            })?;
        let latency_ms = started.elapsed().as_millis() as u64;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, body: text });
        }
        parse_completion(&text, latency_ms)
    }
}

pub(crate) fn parse_completion(text: &str, latency_ms: u64) -> Result<ChatResponse, BackendError> {
    let v: Value = serde_json::from_str(text).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?;
    let usage = |k: &str| {
        v.pointer(&format!("/usage/{k}"))
            .and_then(Value::as_u64)
            .map(|n| n as u32)
    };
    Ok(ChatResponse {
        content: content.to_string(),
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
        latency_ms,
    })
}

impl Backend for HttpChatBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = self.body(request);
        tracing::debug!(url = %self.url, body = %body, "chat request");
        let mut waited = Duration::ZERO;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(r) => {
                    tracing::debug!(content = %r.content, "chat response");
                    return Ok(r);
                }
                Err(e) if e.is_transient() && attempts < self.retry.max_attempts => {
                    let d = self.retry.delay(attempts);
                    if waited + d > self.retry.max_total_delay {
                        return Err(BackendError::RetriesExhausted {
                            attempts,
                            last: Box::new(e),
                        });
                    }
                    tracing::warn!(error = %e, attempt = attempts, "retrying chat request");
                    self.sleeper.sleep(d);
                    waited += d;
                }
                Err(e) if e.is_transient() => {
                    return Err(BackendError::RetriesExhausted {
                        attempts,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}
