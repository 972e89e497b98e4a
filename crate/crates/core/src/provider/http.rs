//! OpenAI-compatible `POST /v1/chat/completions` client.

use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{
    CompletionProvider, CompletionRequest, CompletionResponse, ProviderConfig, ProviderError,
    TokenUsage,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body. Sampling fields are always present on the wire.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatCompletionBody {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl ChatCompletionBody {
    pub fn build(config: &ProviderConfig, request: &CompletionRequest) -> Self {
        let mut messages = Vec::with_capacity(2);
        if !request.system.is_empty() {
            messages.push(ChatMessage {
                role: "system".into(),
                content: request.system.clone(),
            });
        }
        messages.push(ChatMessage {
            role: "user".into(),
            content: request.user.clone(),
        });
        let o = &request.overrides;
        Self {
            model: config.model.clone(),
            messages,
            temperature: o.temperature.unwrap_or(config.temperature),
            top_p: o.top_p.unwrap_or(config.top_p),
            max_tokens: o.max_tokens.unwrap_or(config.max_tokens),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatCompletionReply {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Debug, Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    prompt_tokens: u32,
    completion_tokens: u32,
}

pub struct HttpProvider {
    config: ProviderConfig,
    client: Client,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpProvider {
    /// Reads the API key from the environment variable named in the config,
    /// if any. A missing variable means requests go out unauthenticated,
    /// which is what local servers expect.
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok())
            .filter(|k| !k.is_empty());
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| ProviderError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            config,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn attempt(&self, body: &ChatCompletionBody) -> Result<CompletionResponse, ProviderError> {
        let mut req = self.client.post(self.config.completions_url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| self.classify(e))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| self.classify(e))?;
        if !status.is_success() {
            return Err(ProviderError::Transport {
                status: Some(status.as_u16()),
                message: truncate(&text, 200),
            });
        }
        let reply: ChatCompletionReply = serde_json::from_str(&text)
            .map_err(|e| ProviderError::MalformedResponse(format!("{e}: {}", truncate(&text, 200))))?;
        let content = reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::MalformedResponse("no message content in choices".into()))?;
        Ok(CompletionResponse {
            text: content,
            latency_s: 0.0,
            usage: reply.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
            retries: 0,
        })
    }

    fn classify(&self, e: reqwest::Error) -> ProviderError {
        if e.is_timeout() {
            ProviderError::Timeout {
                seconds: self.config.timeout_s,
            }
        } else {
            ProviderError::Transport {
                status: e.status().map(|s| s.as_u16()),
                message: e.to_string(),
            }
        }
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let body = ChatCompletionBody::build(&self.config, request);
        let started = Instant::now();
        let mut retries = 0;
        loop {
            match self.attempt(&body) {
                Ok(mut resp) => {
                    resp.latency_s = started.elapsed().as_secs_f64();
                    resp.retries = retries;
                    return Ok(resp);
                }
                Err(e) if e.is_retryable() && retries < self.config.retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << retries.min(16));
                    tracing::warn!(error = %e, retry = retries + 1, wait_ms = wait, "completion failed, retrying");
                    std::thread::sleep(Duration::from_millis(wait));
                    retries += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn label(&self) -> String {
        self.config.model.clone()
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}…", &s[..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_carries_defaults_and_overrides() {
        let cfg = ProviderConfig::default();
        let mut req = CompletionRequest::new("sys", "user");
        let body = serde_json::to_value(ChatCompletionBody::build(&cfg, &req)).unwrap();
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["top_p"], 0.1);
        assert_eq!(body["max_tokens"], 512);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "user");
        req.overrides.max_tokens = Some(64);
        let body = ChatCompletionBody::build(&cfg, &req);
        assert_eq!(body.max_tokens, 64);
    }

    #[test]
    fn empty_user_text_fails_before_network() {
        let mut cfg = ProviderConfig::local("m");
        // nothing listens on port 9; a network attempt would be a transport error
        cfg.endpoint = "http://127.0.0.1:9".into();
        let p = HttpProvider::new(cfg).unwrap();
        let err = p.complete(&CompletionRequest::new("sys", "  ")).unwrap_err();
        assert!(matches!(err, ProviderError::InvalidRequest(_)));
    }

    #[test]
    fn debug_redacts_key() {
        std::env::set_var("AGENTCTL_TEST_KEY_REDACT", "sk-secret");
        let mut cfg = ProviderConfig::default();
        cfg.api_key_env = Some("AGENTCTL_TEST_KEY_REDACT".into());
        let p = HttpProvider::new(cfg).unwrap();
        assert!(!format!("{p:?}").contains("sk-secret"));
    }
}
