use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use super::scripted::ScriptedBehavior;

/// Identifier a task uses to address one configured assistant instance.
///
/// Lowercase ASCII letters, digits and `-`, between 1 and 64 characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DriverId(String);

impl DriverId {
    pub const MAX_LEN: usize = 64;

    pub fn new(value: impl Into<String>) -> Result<Self, InvalidDriverId> {
        let value = value.into();
        let valid = !value.is_empty()
            && value.len() <= Self::MAX_LEN
            && value
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if valid {
            Ok(Self(value))
        } else {
            Err(InvalidDriverId(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DriverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for DriverId {
    type Error = InvalidDriverId;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl TryFrom<&str> for DriverId {
    type Error = InvalidDriverId;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<DriverId> for String {
    fn from(id: DriverId) -> Self {
        id.0
    }
}

impl AsRef<str> for DriverId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid driver id {0:?}: expected 1-64 characters from [a-z0-9-]")]
pub struct InvalidDriverId(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    OpenaiCompatible,
    GeminiCompatible,
    Scripted,
}

impl ProviderKind {
    pub fn is_network(self) -> bool {
        !matches!(self, ProviderKind::Scripted)
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::OpenaiCompatible => "openai-compatible",
            ProviderKind::GeminiCompatible => "gemini-compatible",
            ProviderKind::Scripted => "scripted",
        })
    }
}

/// User-specific configuration of one assistant instance.
///
/// The API key is never stored here; `credential_env` names the environment
/// variable it is read from at send time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub id: DriverId,
    pub provider: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<Url>,
    #[serde(default)]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    #[serde(default = "DriverConfig::default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "DriverConfig::default_temperature")]
    pub temperature: f64,
    #[serde(default = "DriverConfig::default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<ScriptedBehavior>,
}

impl DriverConfig {
    pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
    pub const DEFAULT_TEMPERATURE: f64 = 0.2;
    pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;

    fn default_timeout_ms() -> u64 {
        Self::DEFAULT_TIMEOUT_MS
    }

    fn default_temperature() -> f64 {
        Self::DEFAULT_TEMPERATURE
    }

    fn default_max_output_tokens() -> u32 {
        Self::DEFAULT_MAX_OUTPUT_TOKENS
    }

    /// Config for a network provider with default tuning.
    pub fn network(
        id: DriverId,
        provider: ProviderKind,
        endpoint: Url,
        model: impl Into<String>,
        credential_env: Option<String>,
    ) -> Self {
        Self {
            id,
            provider,
            endpoint: Some(endpoint),
            model: model.into(),
            credential_env,
            timeout_ms: Self::DEFAULT_TIMEOUT_MS,
            temperature: Self::DEFAULT_TEMPERATURE,
            max_output_tokens: Self::DEFAULT_MAX_OUTPUT_TOKENS,
            script: None,
        }
    }

    /// Config for an offline scripted driver.
    pub fn scripted(id: DriverId, script: ScriptedBehavior) -> Self {
        Self {
            id,
            provider: ProviderKind::Scripted,
            endpoint: None,
            model: "scripted".to_owned(),
            credential_env: None,
            timeout_ms: Self::DEFAULT_TIMEOUT_MS,
            temperature: Self::DEFAULT_TEMPERATURE,
            max_output_tokens: Self::DEFAULT_MAX_OUTPUT_TOKENS,
            script: Some(script),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), ConfigViolation> {
        let violation = |reason: String| ConfigViolation {
            driver_id: self.id.clone(),
            reason,
        };
        if self.timeout_ms == 0 {
            return Err(violation("timeout_ms must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(violation(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(violation("max_output_tokens must be positive".into()));
        }
        match self.provider {
            ProviderKind::Scripted => {
                if self.endpoint.is_some() {
                    return Err(violation("scripted drivers take a script, not an endpoint".into()));
                }
                match &self.script {
                    None => return Err(violation("scripted driver requires a script".into())),
                    Some(script) => script.validate().map_err(violation)?,
                }
            }
            ProviderKind::OpenaiCompatible | ProviderKind::GeminiCompatible => {
                match &self.endpoint {
                    Some(url) if matches!(url.scheme(), "http" | "https") && url.has_host() => {}
                    Some(url) => {
                        return Err(violation(format!(
                            "endpoint {url} is not an absolute http(s) URL"
                        )))
                    }
                    None => return Err(violation(format!("{} driver requires an endpoint", self.provider))),
                }
                if self.model.is_empty() {
                    return Err(violation("model must not be empty".into()));
                }
                if self.script.is_some() {
                    return Err(violation("only scripted drivers take a script".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("driver {driver_id}: {reason}")]
pub struct ConfigViolation {
    pub driver_id: DriverId,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// Provider-neutral chat request.
///
/// Construction validates that the message list is non-empty, ends with a user
/// turn and carries no empty content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRequest")]
pub struct AssistantRequest {
    messages: Vec<Message>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature_override: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens_override: Option<u32>,
    correlation_id: String,
}

#[derive(Deserialize)]
struct RawRequest {
    messages: Vec<Message>,
    #[serde(default)]
    temperature_override: Option<f64>,
    #[serde(default)]
    max_tokens_override: Option<u32>,
    #[serde(default)]
    correlation_id: String,
}

impl TryFrom<RawRequest> for AssistantRequest {
    type Error = InvalidRequest;

    fn try_from(raw: RawRequest) -> Result<Self, Self::Error> {
        let mut request = AssistantRequest::new(raw.messages)?;
        if let Some(t) = raw.temperature_override {
            request = request.with_temperature(t)?;
        }
        if let Some(m) = raw.max_tokens_override {
            request = request.with_max_tokens(m)?;
        }
        Ok(request.with_correlation_id(raw.correlation_id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidRequest {
    #[error("request has no messages")]
    Empty,
    #[error("last message must have role user")]
    LastNotUser,
    #[error("message {0} has empty content")]
    EmptyContent(usize),
    #[error("temperature override {0} outside [0, 2]")]
    Temperature(String),
    #[error("max tokens override must be positive")]
    MaxTokens,
}

impl AssistantRequest {
    pub fn new(messages: Vec<Message>) -> Result<Self, InvalidRequest> {
        let last = messages.last().ok_or(InvalidRequest::Empty)?;
        if last.role != Role::User {
            return Err(InvalidRequest::LastNotUser);
        }
        if let Some(i) = messages.iter().position(|m| m.content.is_empty()) {
            return Err(InvalidRequest::EmptyContent(i));
        }
        Ok(Self {
            messages,
            temperature_override: None,
            max_tokens_override: None,
            correlation_id: String::new(),
        })
    }

    /// Single user message.
    pub fn user(content: impl Into<String>) -> Result<Self, InvalidRequest> {
        Self::new(vec![Message::user(content)])
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, InvalidRequest> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(InvalidRequest::Temperature(temperature.to_string()));
        }
        self.temperature_override = Some(temperature);
        Ok(self)
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Result<Self, InvalidRequest> {
        if max_tokens == 0 {
            return Err(InvalidRequest::MaxTokens);
        }
        self.max_tokens_override = Some(max_tokens);
        Ok(self)
    }

    pub fn with_correlation_id(mut self, id: impl Into<String>) -> Self {
        self.correlation_id = id.into();
        self
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn temperature_override(&self) -> Option<f64> {
        self.temperature_override
    }

    pub fn max_tokens_override(&self) -> Option<u32> {
        self.max_tokens_override
    }

    pub fn correlation_id(&self) -> &str {
        &self.correlation_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistantResponse {
    pub driver_id: DriverId,
    pub content: String,
    pub latency_ms: u64,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Auth,
    Network,
    Timeout,
    RateLimit,
    MalformedResponse,
    Cancelled,
    ScriptExhausted,
}

impl ErrorKind {
    /// Whether a call failing this way may succeed when repeated.
    pub fn default_retryable(self) -> bool {
        matches!(
            self,
            ErrorKind::Network | ErrorKind::Timeout | ErrorKind::RateLimit
        )
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Auth => "auth",
            ErrorKind::Network => "network",
            ErrorKind::Timeout => "timeout",
            ErrorKind::RateLimit => "rate_limit",
            ErrorKind::MalformedResponse => "malformed_response",
            ErrorKind::Cancelled => "cancelled",
            ErrorKind::ScriptExhausted => "script_exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("driver {driver_id}: {kind}: {message}")]
pub struct DriverError {
    pub driver_id: DriverId,
    pub kind: ErrorKind,
    pub message: String,
    pub retryable: bool,
}

impl DriverError {
    pub fn new(driver_id: DriverId, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            driver_id,
            kind,
            message: message.into(),
            retryable: kind.default_retryable(),
        }
    }

    pub fn cancelled(driver_id: DriverId) -> Self {
        Self::new(
            driver_id,
            ErrorKind::Cancelled,
            "cancelled after another driver answered first",
        )
    }
}
