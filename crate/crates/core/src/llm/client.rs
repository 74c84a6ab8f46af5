use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::PromptText;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    /// The runtime could not be reached or kept failing. Callers fall back
    /// to [`super::FALLBACK_MESSAGE`].
    #[error("language model runtime unavailable after {attempts} attempt(s): {reason}")]
    FallbackUnavailable { attempts: u32, reason: String },
    #[error("language model runtime returned an unusable reply: {0}")]
    MalformedRuntimeReply(String),
    #[error("invalid language model client config: {0}")]
    InvalidConfig(String),
}

/// Request shape sent to the runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatApi {
    /// `/api/chat` with separate system and user messages.
    #[default]
    Chat,
    /// `/api/generate` with one concatenated prompt.
    Generate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmClientConfig {
    /// Base URL of the runtime, e.g. `http://127.0.0.1:11434`.
    pub endpoint_url: String,
    pub model_name: String,
    pub request_timeout_ms: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub api: ChatApi,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:11434".into(),
            model_name: "qwen2.5:7b".into(),
            request_timeout_ms: 60_000,
            max_retries: 1,
            retry_backoff_ms: 250,
            api: ChatApi::Chat,
        }
    }
}

impl LlmClientConfig {
    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.request_timeout_ms == 0 {
            return Err(LlmError::InvalidConfig("request timeout must be positive".into()));
        }
        if reqwest::Url::parse(&self.endpoint_url).is_err() {
            return Err(LlmError::InvalidConfig(format!("bad endpoint url `{}`", self.endpoint_url)));
        }
        Ok(())
    }
}

/// Anything that can turn a prompt into reply text.
#[async_trait]
pub trait LlmResponder: Send + Sync {
    async fn complete(&self, prompt: &PromptText) -> Result<String, LlmError>;

    /// Cheap liveness probe bounded by `timeout`.
    async fn is_reachable(&self, timeout: Duration) -> bool;
}

/// Client for an Ollama-compatible local runtime.
#[derive(Debug, Clone)]
pub struct OllamaClient {
    config: LlmClientConfig,
    http: reqwest::Client,
}

enum AttemptError {
    Retryable(String),
    Fatal(LlmError),
}

impl OllamaClient {
    pub fn new(config: LlmClientConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let http = reqwest::Client::builder()
            .timeout(config.request_timeout())
            .build()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint_url.trim_end_matches('/'), path)
    }

    fn request(&self, prompt: &PromptText) -> (String, Value) {
        match self.config.api {
            ChatApi::Chat => (
                self.url("/api/chat"),
                json!({
                    "model": self.config.model_name,
                    "stream": false,
                    "messages": [
                        {"role": "system", "content": prompt.system_instruction},
                        {"role": "user", "content": prompt.filled_template},
                    ],
                }),
            ),
            ChatApi::Generate => (
                self.url("/api/generate"),
                json!({
                    "model": self.config.model_name,
                    "stream": false,
                    "prompt": prompt.assembled,
                }),
            ),
        }
    }

    async fn attempt(&self, url: &str, body: &Value) -> Result<String, AttemptError> {
        let response = self
            .http
            .post(url)
            .json(body)
            .send()
            .await
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(AttemptError::Retryable(format!("runtime answered HTTP {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(LlmError::FallbackUnavailable {
                attempts: 1,
                reason: format!("runtime answered HTTP {status}"),
            }));
        }
        let text = response
            .text()
            .await
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        extract_reply(self.config.api, &text).map_err(AttemptError::Fatal)
    }
}

fn extract_reply(api: ChatApi, body: &str) -> Result<String, LlmError> {
    if body.trim().is_empty() {
        return Err(LlmError::MalformedRuntimeReply("empty body".into()));
    }
    let value: Value = serde_json::from_str(body)
        .map_err(|e| LlmError::MalformedRuntimeReply(format!("body is not JSON: {e}")))?;
    let content = match api {
        ChatApi::Chat => value.pointer("/message/content"),
        ChatApi::Generate => value.get("response"),
    };
    match content.and_then(Value::as_str) {
        Some(text) if !text.trim().is_empty() => Ok(text.to_string()),
        Some(_) => Err(LlmError::MalformedRuntimeReply("reply text is empty".into())),
        None => Err(LlmError::MalformedRuntimeReply("reply text field missing".into())),
    }
}

#[async_trait]
impl LlmResponder for OllamaClient {
    async fn complete(&self, prompt: &PromptText) -> Result<String, LlmError> {
        let (url, body) = self.request(prompt);
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&url, &body).await {
                Ok(reply) => return Ok(reply),
                Err(AttemptError::Fatal(LlmError::FallbackUnavailable { reason, .. })) => {
                    return Err(LlmError::FallbackUnavailable { attempts: attempt, reason })
                }
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Retryable(reason)) => {
                    tracing::debug!(attempt, "llm request failed: {reason}");
                    last = reason;
                }
            }
            if attempt < attempts && self.config.retry_backoff_ms > 0 {
                tokio::time::sleep(Duration::from_millis(self.config.retry_backoff_ms * attempt as u64)).await;
            }
        }
        Err(LlmError::FallbackUnavailable { attempts, reason: last })
    }

    async fn is_reachable(&self, timeout: Duration) -> bool {
        let probe = self.http.get(self.url("/api/tags")).timeout(timeout).send();
        matches!(tokio::time::timeout(timeout, probe).await, Ok(Ok(r)) if r.status().is_success())
    }
}

/// Sends `prompt` to the runtime and returns the reply text verbatim.
pub async fn generate_suggestion(
    responder: &dyn LlmResponder,
    prompt: &PromptText,
) -> Result<String, LlmError> {
    responder.complete(prompt).await
}

/// Fixed-reply responder for offline runs and tests.
#[derive(Debug, Clone)]
pub struct StubResponder {
    pub reply: Option<String>,
    pub delay: Duration,
}

impl StubResponder {
    pub fn replying(reply: impl Into<String>) -> Self {
        Self { reply: Some(reply.into()), delay: Duration::ZERO }
    }

    /// A responder that always reports the runtime as down.
    pub fn unavailable() -> Self {
        Self { reply: None, delay: Duration::ZERO }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

#[async_trait]
impl LlmResponder for StubResponder {
    async fn complete(&self, _prompt: &PromptText) -> Result<String, LlmError> {
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        self.reply.clone().ok_or_else(|| LlmError::FallbackUnavailable {
            attempts: 1,
            reason: "stub runtime configured as unavailable".into(),
        })
    }

    async fn is_reachable(&self, _timeout: Duration) -> bool {
        self.reply.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_chat_and_generate_replies() {
        let chat = r#"{"model":"q","message":{"role":"assistant","content":"hello"},"done":true}"#;
        assert_eq!(extract_reply(ChatApi::Chat, chat).unwrap(), "hello");
        let generate = r#"{"model":"q","response":"hi","done":true}"#;
        assert_eq!(extract_reply(ChatApi::Generate, generate).unwrap(), "hi");
    }

    #[test]
    fn empty_or_odd_bodies_are_malformed() {
        for body in ["", "   ", "not json", r#"{"message":{}}"#, r#"{"message":{"content":""}}"#] {
            assert!(matches!(
                extract_reply(ChatApi::Chat, body),
                Err(LlmError::MalformedRuntimeReply(_))
            ));
        }
    }

    #[test]
    fn config_validation() {
        let mut config = LlmClientConfig::default();
        assert!(config.validate().is_ok());
        config.request_timeout_ms = 0;
        assert!(config.validate().is_err());
        let config = LlmClientConfig { endpoint_url: "not a url".into(), ..LlmClientConfig::default() };
        assert!(OllamaClient::new(config).is_err());
    }
}
