use std::sync::Arc;
use std::time::Duration;

use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use crate::model::ModelSpec;
use crate::prompt::ChatMessage;
use crate::ratelimit::RateLimiter;

/// Exponential backoff between attempts: `base * 2^k`, capped at `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub max: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(500),
            max: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base
            .saturating_mul(2u32.saturating_pow(retry.min(16)))
            .min(self.max)
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Debug, Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

/// A successful exchange and the attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub content: String,
    pub attempts: u32,
}

/// Final failure after retries (or a non-retryable error).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} after {attempts} attempt(s)")]
pub struct RequestFailure {
    pub message: String,
    pub attempts: u32,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

/// Chat-completions client for one model: bearer auth, retries on 429/5xx
/// and transport errors, and a shared rate limiter.
#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    spec: Arc<ModelSpec>,
    api_key: Option<String>,
    limiter: Arc<RateLimiter>,
    retry: RetryPolicy,
}

impl ChatClient {
    pub fn new(spec: ModelSpec, api_key: Option<String>, limiter: Arc<RateLimiter>, retry: RetryPolicy) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("reqwest client with default TLS");
        Self {
            http,
            spec: Arc::new(spec),
            api_key,
            limiter,
            retry,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    async fn attempt(&self, messages: &[ChatMessage]) -> Attempt {
        let body = ChatRequest {
            model: &self.spec.name,
            messages,
            temperature: self.spec.temperature,
            top_p: self.spec.top_p,
        };
        let mut req = self.http.post(&self.spec.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(format!("HTTP {status}"));
        }
        match resp.json::<ChatResponse>().await {
            Ok(parsed) => match parsed.choices.into_iter().next() {
                Some(c) => Attempt::Done(c.message.content.unwrap_or_default()),
                None => Attempt::Fatal("response has no choices".into()),
            },
            Err(e) => Attempt::Fatal(format!("malformed response: {e}")),
        }
    }

    /// Sends one conversation, retrying at most `max_retries` times.
    pub async fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, RequestFailure> {
        let mut attempts = 0;
        loop {
            self.limiter.acquire().await;
            attempts += 1;
            match self.attempt(messages).await {
                Attempt::Done(content) => return Ok(Completion { content, attempts }),
                Attempt::Fatal(message) => return Err(RequestFailure { message, attempts }),
                Attempt::Retry(message) => {
                    if attempts > self.spec.max_retries {
                        return Err(RequestFailure { message, attempts });
                    }
                    log::debug!("{}: {message}, retrying", self.spec.name);
                    tokio::time::sleep(self.retry.delay(attempts - 1)).await;
                }
            }
        }
    }
}
