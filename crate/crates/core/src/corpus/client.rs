use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the bearer token for [`HttpChatClient`].
pub const AUTH_TOKEN_ENV: &str = "SWIE_LLM_API_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("authentication rejected")]
    Auth,
    #[error("quota or rate limit exceeded")]
    Quota,
    #[error("server error {0}")]
    Server(u16),
    #[error("request rejected with status {0}")]
    Rejected(u16),
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no auth token in ${0}")]
    MissingToken(String),
}

impl ClientError {
    /// Failures worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(self, ClientError::Timeout | ClientError::Quota | ClientError::Server(_) | ClientError::Transport(_))
    }
}

/// A service that turns a prompt into a text completion.
pub trait ExternalTextClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_delay_ms: u64,
    pub max_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, initial_delay_ms: 500, max_delay_ms: 8000, multiplier: 2.0 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.initial_delay_ms as f64 * self.multiplier.powi(attempt as i32);
        Duration::from_millis(ms.min(self.max_delay_ms as f64) as u64)
    }
}

/// Asks `client` for a completion, retrying transient failures with
/// exponential backoff. Blank completions are rejected as malformed.
pub fn llm_generate_negative(
    prompt: &str,
    client: &dyn ExternalTextClient,
    retry: &RetryPolicy,
) -> Result<String, ClientError> {
    let mut attempt = 0;
    loop {
        log::debug!("llm request (attempt {}): {prompt}", attempt + 1);
        match client.complete(prompt) {
            Ok(text) => {
                log::debug!("llm response: {text}");
                let text = text.trim().to_string();
                if text.is_empty() {
                    return Err(ClientError::Malformed("empty completion".into()));
                }
                return Ok(text);
            }
            Err(e) if e.is_transient() && attempt < retry.max_retries => {
                log::warn!("llm request failed ({e}); retrying");
                std::thread::sleep(retry.delay(attempt));
                attempt += 1;
            }
            Err(e) => {
                log::warn!("llm request failed: {e}");
                return Err(e);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpClientConfig {
    /// Chat-completion endpoint URL.
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub temperature: f64,
    /// Environment variable that holds the bearer token.
    pub token_env: String,
}

impl Default for HttpClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            timeout_secs: 60,
            temperature: 0.7,
            token_env: AUTH_TOKEN_ENV.into(),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// Chat-completion client over HTTP.
#[derive(Debug)]
pub struct HttpChatClient {
    config: HttpClientConfig,
    token: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    /// Reads the token from the configured environment variable.
    pub fn from_env(config: HttpClientConfig) -> Result<Self, ClientError> {
        let token = std::env::var(&config.token_env).map_err(|_| ClientError::MissingToken(config.token_env.clone()))?;
        Ok(Self::new(config, token))
    }

    pub fn new(config: HttpClientConfig, token: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self { config, token, agent }
    }
}

fn map_ureq(e: ureq::Error) -> ClientError {
    match e {
        ureq::Error::StatusCode(401 | 403) => ClientError::Auth,
        ureq::Error::StatusCode(429) => ClientError::Quota,
        ureq::Error::StatusCode(s) if s >= 500 => ClientError::Server(s),
        ureq::Error::StatusCode(s) => ClientError::Rejected(s),
        ureq::Error::Timeout(_) => ClientError::Timeout,
        ureq::Error::Json(e) => ClientError::Malformed(e.to_string()),
        other => ClientError::Transport(other.to_string()),
    }
}

impl ExternalTextClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage { role: "user", content: prompt }],
            temperature: self.config.temperature,
        };
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(&body)
            .map_err(map_ureq)?;
        let parsed: ChatResponse = resp.body_mut().read_json().map_err(map_ureq)?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::Malformed("no choices in response".into()))
    }
}

/// Test double that replays scripted outcomes, then repeats a fallback.
#[derive(Debug, Default)]
pub struct MockClient {
    script: Mutex<VecDeque<Result<String, ClientError>>>,
    fallback: Option<Result<String, ClientError>>,
    calls: Mutex<Vec<String>>,
}

impl MockClient {
    /// Always answers with `text`.
    pub fn canned(text: impl Into<String>) -> Self {
        Self { fallback: Some(Ok(text.into())), ..Self::default() }
    }

    /// Always fails with `err`.
    pub fn failing(err: ClientError) -> Self {
        Self { fallback: Some(Err(err)), ..Self::default() }
    }

    pub fn scripted(outcomes: Vec<Result<String, ClientError>>) -> Self {
        Self { script: Mutex::new(outcomes.into()), ..Self::default() }
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().map(|c| c.clone()).unwrap_or_default()
    }
}

impl ExternalTextClient for MockClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        if let Ok(mut c) = self.calls.lock() {
            c.push(prompt.to_string());
        }
        let next = self.script.lock().ok().and_then(|mut s| s.pop_front());
        next.or_else(|| self.fallback.clone())
            .unwrap_or_else(|| Err(ClientError::Transport("mock script exhausted".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> RetryPolicy {
        RetryPolicy { max_retries: 3, initial_delay_ms: 0, max_delay_ms: 0, multiplier: 2.0 }
    }

    #[test]
    fn retries_transient_failures() {
        let client = MockClient::scripted(vec![
            Err(ClientError::Timeout),
            Err(ClientError::Server(503)),
            Ok("  flawed text \n".into()),
        ]);
        assert_eq!(llm_generate_negative("p", &client, &fast()).unwrap(), "flawed text");
        assert_eq!(client.calls().len(), 3);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let client = MockClient::failing(ClientError::Timeout);
        assert_eq!(llm_generate_negative("p", &client, &fast()), Err(ClientError::Timeout));
        assert_eq!(client.calls().len(), 4);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let client = MockClient::failing(ClientError::Auth);
        assert_eq!(llm_generate_negative("p", &client, &fast()), Err(ClientError::Auth));
        assert_eq!(client.calls().len(), 1);
    }

    #[test]
    fn empty_completion_is_malformed() {
        let client = MockClient::canned("   ");
        assert!(matches!(llm_generate_negative("p", &client, &fast()), Err(ClientError::Malformed(_))));
    }

    #[test]
    fn backoff_grows_and_caps() {
        let r = RetryPolicy { max_retries: 5, initial_delay_ms: 100, max_delay_ms: 350, multiplier: 2.0 };
        let d: Vec<u64> = (0..4).map(|a| r.delay(a).as_millis() as u64).collect();
        assert_eq!(d, [100, 200, 350, 350]);
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let cfg = HttpClientConfig { endpoint: "http://127.0.0.1:9/v1".into(), timeout_secs: 2, ..HttpClientConfig::default() };
        let client = HttpChatClient::new(cfg, "t".into());
        let err = client.complete("hi").unwrap_err();
        assert!(err.is_transient(), "{err:?}");
    }
}
