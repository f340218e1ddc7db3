//! Chat-completion client for OpenAI-compatible endpoints.

use std::time::Duration;

use log::{debug, warn};
use serde_json::{json, Value};

use super::{Backend, BackendError, ModelConfig};
use crate::perturbation::InjectedPrompt;
use crate::rng::{Draw, RngStream};

/// System message sent with every request. `{k}` is replaced by the list length.
pub const SYSTEM_INSTRUCTION: &str = "Answer with a JSON array of exactly {k} strings and nothing \
else. Each string is one item of the requested list. Do not number the items, do not add \
commentary and do not wrap the array in a code block.";

pub fn system_instruction(k: usize) -> String {
    SYSTEM_INSTRUCTION.replace("{k}", &k.to_string())
}

/// Exponential backoff: attempt `n` (0-based) waits `base * factor^n`, scaled
/// by a jitter factor in `[0.5, 1)` when jitter is on.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub jitter: bool,
}

impl RetryPolicy {
    pub fn standard(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            jitter: true,
        }
    }

    pub fn delay(&self, attempt: u32, stream: &mut RngStream) -> Duration {
        let scale = self.factor.powi(attempt as i32);
        let jitter = if self.jitter {
            0.5 + 0.5 * stream.unit()
        } else {
            1.0
        };
        self.base_delay.mul_f64(scale * jitter)
    }
}

enum Failure {
    Transient(BackendError),
    Fatal(BackendError),
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model_name: String,
    temperature: f64,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(config: &ModelConfig) -> Result<Self, BackendError> {
        Self::with_retry(config, RetryPolicy::standard(config.max_retries))
    }

    pub fn with_retry(config: &ModelConfig, retry: RetryPolicy) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_secs))
            .build()
            .map_err(|e| BackendError::Unavailable(format!("cannot build client: {e}")))?;
        let api_key = match &config.http.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Some(key),
                _ => {
                    warn!("environment variable {var} is not set; sending requests without credentials");
                    None
                }
            },
            None => None,
        };
        let url = format!(
            "{}/{}",
            config.http.base_url.trim_end_matches('/'),
            config.http.path.trim_start_matches('/')
        );
        Ok(Self {
            client,
            url,
            model_name: config.model_name.clone(),
            temperature: config.temperature,
            api_key,
            retry,
        })
    }

    pub fn request_body(&self, prompt: &InjectedPrompt, k: usize) -> Value {
        json!({
            "model": self.model_name,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system_instruction(k)},
                {"role": "user", "content": prompt.full_text},
            ],
        })
    }

    fn redact(&self, text: &str) -> String {
        match &self.api_key {
            Some(key) => text.replace(key.as_str(), "[REDACTED]"),
            None => text.to_string(),
        }
    }

    fn attempt(&self, body: &str) -> Result<String, Failure> {
        let mut request = self
            .client
            .post(&self.url)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                Failure::Transient(BackendError::Timeout)
            } else {
                Failure::Transient(BackendError::Unavailable(e.to_string()))
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                Failure::Transient(BackendError::Timeout)
            } else {
                Failure::Transient(BackendError::Unavailable(e.to_string()))
            }
        })?;
        debug!("response {status}: {}", self.redact(&text));

        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Failure::Fatal(BackendError::AuthFailure(format!(
                "HTTP {status}"
            ))));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Transient(BackendError::Unavailable(format!(
                "HTTP {status}"
            ))));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(BackendError::Unavailable(format!(
                "HTTP {status}: {}",
                self.redact(&text)
            ))));
        }
        extract_content(&text).ok_or_else(|| {
            Failure::Fatal(BackendError::Unavailable(
                "response has no choices[0].message.content".into(),
            ))
        })
    }
}

/// `choices[0].message.content` of a chat-completion response.
pub fn extract_content(body: &str) -> Option<String> {
    let value: Value = serde_json::from_str(body).ok()?;
    value
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl Backend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(
        &self,
        prompt: &InjectedPrompt,
        k: usize,
        stream: &mut RngStream,
    ) -> Result<String, BackendError> {
        let body = self.request_body(prompt, k).to_string();
        debug!("POST {} {}", self.url, self.redact(&body));
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(content) => return Ok(content),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(e)) => {
                    if attempt >= self.retry.max_retries {
                        return Err(match e {
                            BackendError::Timeout => BackendError::Timeout,
                            other => BackendError::Unavailable(format!(
                                "gave up after {} attempts: {other}",
                                attempt + 1
                            )),
                        });
                    }
                    let wait = self.retry.delay(attempt, stream);
                    warn!("request failed ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }
}
