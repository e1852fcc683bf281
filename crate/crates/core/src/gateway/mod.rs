//! Chat-completions client with retry, a deterministic mock, and the
//! generate-check-refine loop.
//!
//! Requests use the OpenAI-compatible wire format:
//! `POST {base_url}/chat/completions` with `model`, `messages`,
//! `temperature` and `max_tokens`, reading `choices[0].message.content`.

mod generate;
mod http;
pub mod mock;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

pub use generate::{
    batch_generate, generate_template, AlignmentCheck, BatchOptions, GenerateOptions, GenerationOutcome,
    TranscriptEntry, Violation, GENERATION_SYSTEM_PROMPT,
};
pub use http::HttpTransport;
pub use mock::{MockReply, MockTransport};

pub const DEFAULT_GENERATION_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_CLASSIFICATION_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_ROUNDS: u32 = 3;

/// A string that never appears in `Debug` output or serialized bodies.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct SecretString(String);

impl SecretString {
    pub fn new(value: impl Into<String>) -> Self {
        SecretString(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for SecretString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretString(***)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key: SecretString,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: SecretString::default(),
            model_name: "gpt-4".into(),
            temperature: DEFAULT_GENERATION_TEMPERATURE,
            max_tokens: 512,
            timeout: Duration::from_secs(60),
            max_retries: 3,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidConfig(format!(
                "temperature {} outside 0..=2",
                self.temperature
            )));
        }
        if self.max_retries > 10 {
            return Err(GatewayError::InvalidConfig(format!("max_retries {} exceeds 10", self.max_retries)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidConfig("max_tokens must be positive".into()));
        }
        if self.base_url.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("base_url is empty".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("model_name is empty".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompletionRequest {
    pub system_text: String,
    pub user_text: String,
    /// Earlier user/assistant turns, sent between the system and final user message.
    pub prior_turns: Vec<ChatMessage>,
    pub seed: Option<u64>,
    /// Overrides the provider temperature for this call.
    pub temperature: Option<f64>,
}

impl CompletionRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        CompletionRequest { system_text: system_text.into(), user_text: user_text.into(), ..Default::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// JSON body sent to `/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatBody {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// One POST of a chat body. Implementations carry no retry logic.
pub trait Transport: Send + Sync {
    /// `Err` means the request never produced an HTTP status (connect error, timeout).
    fn post(&self, url: &str, api_key: &SecretString, body: &ChatBody, timeout: Duration) -> Result<HttpReply, String>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { base_delay: Duration::from_secs(1), factor: 2.0, jitter: true }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        RetryPolicy { base_delay: Duration::ZERO, factor: 2.0, jitter: false }
    }

    /// Delay before retry number `retry` (1-based): base * factor^(retry-1), plus up to 50% jitter.
    pub fn delay(&self, retry: u32) -> Duration {
        let nominal = self.base_delay.as_secs_f64() * self.factor.powi(retry.saturating_sub(1) as i32);
        let jitter = if self.jitter && nominal > 0.0 { rand::rng().random_range(0.0..=nominal * 0.5) } else { 0.0 };
        Duration::from_secs_f64(nominal + jitter)
    }
}

/// Outcome of a single HTTP attempt, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptStatus {
    Http(u16),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: Vec<AttemptStatus>,
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Shareable completion client; cloning is cheap.
#[derive(Clone)]
pub struct Gateway {
    config: ProviderConfig,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    sleeper: Sleeper,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("config", &self.config).field("retry", &self.retry).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway { config, transport, retry: RetryPolicy::default(), sleeper: Arc::new(std::thread::sleep) })
    }

    pub fn http(config: ProviderConfig) -> Result<Self, GatewayError> {
        Self::new(config, Arc::new(HttpTransport::new()?))
    }

    /// Gateway over a canned [`MockTransport`]; no network, no delays.
    pub fn mock() -> Self {
        let config = ProviderConfig { base_url: "mock://local".into(), model_name: "mock".into(), ..Default::default() };
        Self::new(config, Arc::new(MockTransport::canned()))
            .expect("default config is valid")
            .with_retry(RetryPolicy::immediate())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn body_for(&self, req: &CompletionRequest) -> ChatBody {
        let mut messages = Vec::with_capacity(req.prior_turns.len() + 2);
        if !req.system_text.is_empty() {
            messages.push(ChatMessage { role: Role::System, content: req.system_text.clone() });
        }
        messages.extend(req.prior_turns.iter().cloned());
        messages.push(ChatMessage::user(req.user_text.clone()));
        ChatBody {
            model: self.config.model_name.clone(),
            messages,
            temperature: req.temperature.unwrap_or(self.config.temperature),
            max_tokens: self.config.max_tokens,
            seed: req.seed,
        }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        self.complete_traced(req).map(|c| c.text)
    }

    /// Send one request, retrying transient failures (transport errors, 408, 429, 5xx).
    pub fn complete_traced(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        if req.user_text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("user_text is empty".into()));
        }
        let body = self.body_for(req);
        let url = self.config.endpoint();
        let max_attempts = self.config.max_retries + 1;
        let mut attempts = Vec::new();
        loop {
            let n = attempts.len() as u32 + 1;
            let outcome = self.transport.post(&url, &self.config.api_key, &body, self.config.timeout);
            let retryable = match &outcome {
                Err(detail) => {
                    attempts.push(AttemptStatus::Failed(detail.clone()));
                    Err(GatewayError::Transport { attempts: n, detail: detail.clone() })
                }
                Ok(reply) => {
                    attempts.push(AttemptStatus::Http(reply.status));
                    match reply.status {
                        200..=299 => {
                            let text = parse_completion(&reply.body)?;
                            return Ok(Completion { text, attempts });
                        }
                        401 | 403 => return Err(GatewayError::Auth { status: reply.status }),
                        429 => Err(GatewayError::RateLimited { attempts: n }),
                        408 | 500..=599 => Err(GatewayError::Transport {
                            attempts: n,
                            detail: format!("HTTP {}", reply.status),
                        }),
                        status => {
                            return Err(GatewayError::Http { status, body: truncate(&reply.body, 500) });
                        }
                    }
                }
            };
            if n >= max_attempts {
                return retryable;
            }
            let delay = self.retry.delay(n);
            log::debug!("attempt {n} failed, retrying in {delay:?}");
            (self.sleeper)(delay);
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

fn parse_completion(body: &str) -> Result<String, GatewayError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
    match choice.message.content {
        Some(text) if !text.trim().is_empty() => Ok(text),
        _ => Err(GatewayError::EmptyResponse),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn scripted(replies: Vec<MockReply>, max_retries: u32) -> (Gateway, Arc<MockTransport>, Arc<Mutex<Vec<Duration>>>) {
        let transport = Arc::new(MockTransport::scripted(replies));
        let slept = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&slept);
        let config = ProviderConfig { max_retries, api_key: SecretString::new("sk-secret-123"), ..Default::default() };
        let gw = Gateway::new(config, transport.clone())
            .unwrap()
            .with_retry(RetryPolicy { base_delay: Duration::from_millis(10), factor: 2.0, jitter: false })
            .with_sleeper(move |d| log.lock().unwrap().push(d));
        (gw, transport, slept)
    }

    #[test]
    fn config_bounds() {
        let mut c = ProviderConfig::default();
        c.validate().unwrap();
        c.temperature = 2.5;
        assert!(c.validate().is_err());
        let c = ProviderConfig { max_retries: 11, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn auth_error_is_not_retried() {
        let (gw, transport, slept) = scripted(vec![MockReply::Status(401)], 3);
        let err = gw.complete(&CompletionRequest::new("", "ping")).unwrap_err();
        assert!(matches!(err, GatewayError::Auth { status: 401 }));
        assert_eq!(transport.calls(), 1);
        assert!(slept.lock().unwrap().is_empty());
    }

    #[test]
    fn transient_503_then_success() {
        let (gw, transport, slept) = scripted(
            vec![MockReply::Status(503), MockReply::Status(503), MockReply::Text("hello".into())],
            3,
        );
        let done = gw.complete_traced(&CompletionRequest::new("", "ping")).unwrap();
        assert_eq!(done.text, "hello");
        assert_eq!(done.attempts, vec![AttemptStatus::Http(503), AttemptStatus::Http(503), AttemptStatus::Http(200)]);
        assert_eq!(transport.calls(), 3);
        assert_eq!(*slept.lock().unwrap(), vec![Duration::from_millis(10), Duration::from_millis(20)]);
    }

    #[test]
    fn rate_limit_exhaustion() {
        let (gw, transport, _) = scripted(vec![MockReply::Status(429); 5], 2);
        let err = gw.complete(&CompletionRequest::new("", "ping")).unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited { attempts: 3 }));
        assert_eq!(transport.calls(), 3);
    }

    #[test]
    fn transport_failure_exhaustion() {
        let (gw, _, _) = scripted(vec![MockReply::Fail("connection refused".into()); 2], 1);
        let err = gw.complete(&CompletionRequest::new("", "ping")).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 2, .. }));
    }

    #[test]
    fn other_client_errors_fail_fast() {
        let (gw, transport, _) = scripted(vec![MockReply::Status(400)], 3);
        assert!(matches!(gw.complete(&CompletionRequest::new("", "x")), Err(GatewayError::Http { status: 400, .. })));
        assert_eq!(transport.calls(), 1);
    }

    #[test]
    fn empty_completion() {
        let (gw, _, _) = scripted(vec![MockReply::Text("   ".into())], 0);
        assert!(matches!(gw.complete(&CompletionRequest::new("", "x")), Err(GatewayError::EmptyResponse)));
        assert!(matches!(parse_completion("{\"choices\":[]}"), Err(GatewayError::MalformedResponse(_))));
        assert!(matches!(
            parse_completion("{\"choices\":[{\"message\":{\"content\":null}}]}"),
            Err(GatewayError::EmptyResponse)
        ));
    }

    #[test]
    fn empty_user_text_rejected() {
        assert!(matches!(
            Gateway::mock().complete(&CompletionRequest::new("sys", " ")),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    #[test]
    fn api_key_never_in_body_or_debug() {
        let (gw, transport, _) = scripted(vec![MockReply::Text("ok".into())], 0);
        gw.complete(&CompletionRequest::new("system", "ping")).unwrap();
        let bodies = transport.requests();
        let json = serde_json::to_string(&bodies[0]).unwrap();
        assert!(!json.contains("sk-secret-123"));
        assert!(!format!("{gw:?}").contains("sk-secret-123"));
        assert_eq!(transport.keys_seen(), vec!["sk-secret-123".to_string()]);
    }

    #[test]
    fn body_layout() {
        let gw = Gateway::mock();
        let mut req = CompletionRequest::new("sys", "final").with_seed(4);
        req.prior_turns = vec![ChatMessage::user("first"), ChatMessage::assistant("reply")];
        let body = serde_json::to_value(gw.body_for(&req)).unwrap();
        assert_eq!(body["model"], "mock");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "first");
        assert_eq!(body["messages"][2]["role"], "assistant");
        assert_eq!(body["messages"][3]["content"], "final");
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["max_tokens"], 512);
        assert_eq!(body["seed"], 4);
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy { jitter: false, ..Default::default() };
        assert_eq!(p.delay(1), Duration::from_secs(1));
        assert_eq!(p.delay(2), Duration::from_secs(2));
        assert_eq!(p.delay(3), Duration::from_secs(4));
        let j = RetryPolicy::default();
        for _ in 0..20 {
            let d = j.delay(2);
            assert!(d >= Duration::from_secs(2) && d <= Duration::from_secs(3));
        }
    }
}
