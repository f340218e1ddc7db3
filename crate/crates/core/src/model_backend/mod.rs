//! Model backends and reply parsing.
//!
//! A [`Backend`] turns a prompt into raw reply text. [`query`] runs the reply
//! through [`parse_list`] so every backend, including the mock, goes through
//! the same structured-output path.

mod http;
mod mock;
mod normalize;
mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{extract_content, system_instruction, HttpBackend, RetryPolicy, SYSTEM_INSTRUCTION};
pub use mock::{favored_order, item_label, rank_weights, MockBackend, MockConfig, MAX_VOCAB};
pub use normalize::normalize_item;
pub use parse::{parse_list, ParseError, ParsedList};

use crate::perturbation::InjectedPrompt;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("mock misconfigured: {0}")]
    MockMisconfigured(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    pub base_url: String,
    pub path: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:11434".to_string(),
            path: "/v1/chat/completions".to_string(),
            api_key_env: Some("MODEL_API_KEY".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backend: BackendKind,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub request_timeout_secs: f64,
    #[serde(default)]
    pub http: HttpSettings,
}

impl ModelConfig {
    pub fn mock(model_name: &str) -> Self {
        Self {
            backend: BackendKind::Mock,
            model_name: model_name.to_string(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.request_timeout_secs.is_finite() && self.request_timeout_secs > 0.0) {
            return Err(BackendError::InvalidConfig(
                "request timeout must be positive".into(),
            ));
        }
        if self.model_name.is_empty() {
            return Err(BackendError::InvalidConfig("model name is empty".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            model_name: "mock".to_string(),
            temperature: 0.9,
            max_retries: 3,
            request_timeout_secs: 60.0,
            http: HttpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Recovered,
    Failed(String),
}

impl ParseStatus {
    pub fn is_success(&self) -> bool {
        !matches!(self, ParseStatus::Failed(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResult {
    pub raw_text: String,
    /// Items as parsed (not normalized); empty when parsing failed.
    pub items: Vec<String>,
    pub parse_status: ParseStatus,
}

pub trait Backend: Send + Sync {
    fn model_name(&self) -> &str;

    /// Raw reply text for one request.
    fn complete(
        &self,
        prompt: &InjectedPrompt,
        k: usize,
        stream: &mut RngStream,
    ) -> Result<String, BackendError>;
}

/// Queries `backend` once and parses the reply. Parse failures are reported
/// in the result; only transport-level problems are errors.
pub fn query(
    backend: &dyn Backend,
    prompt: &InjectedPrompt,
    k: usize,
    stream: &mut RngStream,
) -> Result<GenerationResult, BackendError> {
    let raw_text = backend.complete(prompt, k, stream)?;
    Ok(match parse_list(&raw_text, k) {
        Ok(parsed) => GenerationResult {
            raw_text,
            items: parsed.items,
            parse_status: parsed.status,
        },
        Err(e) => GenerationResult {
            raw_text,
            items: Vec::new(),
            parse_status: ParseStatus::Failed(e.to_string()),
        },
    })
}

pub fn build_backend(
    config: &ModelConfig,
    mock: Option<&MockConfig>,
) -> Result<Box<dyn Backend>, BackendError> {
    config.validate()?;
    match config.backend {
        BackendKind::Mock => {
            let mock = mock.ok_or_else(|| {
                BackendError::MockMisconfigured("mock backend requires a mock config".into())
            })?;
            Ok(Box::new(MockBackend::new(
                &config.model_name,
                mock.clone(),
            )?))
        }
        BackendKind::Http => Ok(Box::new(HttpBackend::new(config)?)),
    }
}
