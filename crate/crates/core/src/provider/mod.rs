//! Completion providers: an OpenAI-compatible HTTP client (cloud or local
//! server) and a scripted stand-in for offline runs.

mod http;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{ChatCompletionBody, ChatMessage, HttpProvider};
pub use scripted::{parse_script, ScriptRule, ScriptedProvider};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("request timed out after {seconds} s")]
    Timeout { seconds: f64 },
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("script exhausted")]
    ScriptExhausted,
}

impl ProviderError {
    /// Whether a retry may succeed. Only transport-level failures qualify.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Timeout { .. } => true,
            ProviderError::Transport { status, .. } => match status {
                None => true,
                Some(s) => matches!(s, 408 | 429 | 500..=599),
            },
            _ => false,
        }
    }
}

/// Connection and sampling settings. The API key itself never lives here;
/// only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub timeout_s: f64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com".into(),
            model: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            temperature: 0.0,
            top_p: 0.1,
            max_tokens: 512,
            timeout_s: 120.0,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

impl ProviderConfig {
    /// Defaults for a local OpenAI-compatible server (no API key).
    pub fn local(model: impl Into<String>) -> Self {
        Self {
            endpoint: "http://127.0.0.1:11434".into(),
            model: model.into(),
            api_key_env: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ProviderError::InvalidConfig(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidConfig("max_tokens must be at least 1".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(ProviderError::InvalidConfig(format!("timeout {} s", self.timeout_s)));
        }
        if self.model.trim().is_empty() {
            return Err(ProviderError::InvalidConfig("model name is empty".into()));
        }
        Ok(())
    }

    /// Full chat-completions URL derived from `endpoint`.
    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SamplingOverrides {
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    #[serde(default)]
    pub overrides: SamplingOverrides,
}

impl CompletionRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            overrides: SamplingOverrides::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.user.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("user text is empty".into()));
        }
        Ok(())
    }

    /// System and user text joined; what keyed scripts match against.
    pub fn prompt_text(&self) -> String {
        if self.system.is_empty() {
            self.user.clone()
        } else {
            format!("{}\n\n{}", self.system, self.user)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    /// Wall-clock seconds, including retries.
    pub latency_s: f64,
    pub usage: Option<TokenUsage>,
    /// Transport retries that preceded the successful attempt.
    pub retries: u32,
}

/// Anything that can answer a completion request. Implementations must be
/// usable from several threads at once.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError>;

    /// Short label for logs and reports.
    fn label(&self) -> String;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for std::sync::Arc<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request)
    }

    fn label(&self) -> String {
        (**self).label()
    }
}
