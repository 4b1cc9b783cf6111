//! Chat-completion providers.
//!
//! [`HttpProvider`] talks to any OpenAI-compatible `/chat/completions`
//! endpoint; [`ScriptedProvider`] replays a JSON-lines script for offline
//! runs and tests. Both report token usage and latency for every call.

mod http;
mod mock;

pub use http::HttpProvider;
pub use mock::{ScriptLine, ScriptedProvider};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("gave up after {attempts} attempts: {last}")]
    TransientExhausted { attempts: u32, last: String },
    #[error("malformed provider reply: {0}")]
    MalformedReply(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("mock script exhausted (no unconsumed line matches prompt {0:?})")]
    ScriptExhausted(String),
    #[error("mock script {path}:{line}: {reason}")]
    Script {
        path: String,
        line: usize,
        reason: String,
    },
}

impl ProviderError {
    /// Errors that will not go away by resending the same request.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            ProviderError::Auth(_)
                | ProviderError::Config(_)
                | ProviderError::ScriptExhausted(_)
                | ProviderError::Script { .. }
                | ProviderError::InvalidRequest(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("prompts must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub model: String,
    /// Transport-level retries spent on this call.
    pub retries: u32,
}

impl ChatResponse {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

pub const MAX_RETRIES_LIMIT: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub request_timeout_s: f64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// First backoff delay; doubles on each retry.
    pub backoff_base_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            request_timeout_s: 60.0,
            max_retries: 5,
            parallelism: 4,
            backoff_base_ms: 500,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.parallelism == 0 {
            return Err(ProviderError::Config("parallelism must be >= 1".into()));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(ProviderError::Config(format!(
                "max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.max_retries
            )));
        }
        if !self.request_timeout_s.is_finite() || self.request_timeout_s <= 0.0 {
            return Err(ProviderError::Config("request_timeout_s must be positive".into()));
        }
        if self.base_url.trim().is_empty() {
            return Err(ProviderError::Config("base_url is empty".into()));
        }
        Ok(())
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError>;

    fn name(&self) -> &str;

    /// Providers whose answers depend on call order (scripts) must be driven
    /// sequentially for runs to be reproducible.
    fn requires_sequential(&self) -> bool {
        false
    }
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(req)
    }

    fn name(&self) -> &str {
        (**self).name()
    }

    fn requires_sequential(&self) -> bool {
        (**self).requires_sequential()
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(req)
    }

    fn name(&self) -> &str {
        (**self).name()
    }

    fn requires_sequential(&self) -> bool {
        (**self).requires_sequential()
    }
}

/// One-shot live completion against the configured endpoint.
pub fn complete(cfg: &ProviderConfig, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
    HttpProvider::from_env(cfg.clone())?.complete(req)
}

/// Loads a scripted provider from a JSON-lines file.
pub fn mock_from_script(path: impl AsRef<std::path::Path>) -> Result<ScriptedProvider, ProviderError> {
    ScriptedProvider::from_path(path)
}
