//! Provider wire formats.
//!
//! Each network provider gets a request encoder and a reply decoder. The
//! encoders are pure functions of their inputs so bodies are byte-stable; the
//! API key only ever goes into a header.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::types::{
    AssistantRequest, AssistantResponse, DriverConfig, DriverError, ErrorKind, FinishReason,
    ProviderKind, Role, TokenUsage,
};

pub const OPENAI_AUTH_HEADER: &str = "authorization";
pub const GEMINI_KEY_HEADER: &str = "x-goog-api-key";

const MAX_PROVIDER_MESSAGE: usize = 200;

/// One HTTP request ready to go on the wire.
#[derive(Clone, PartialEq, Eq)]
pub struct WirePayload {
    pub method: &'static str,
    /// Absolute path on the endpoint's origin, including any query string.
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl WirePayload {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Debug for WirePayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let headers: Vec<(&str, &str)> = self
            .headers
            .iter()
            .map(|(k, v)| {
                if is_secret_header(k) {
                    (k.as_str(), "<redacted>")
                } else {
                    (k.as_str(), v.as_str())
                }
            })
            .collect();
        f.debug_struct("WirePayload")
            .field("method", &self.method)
            .field("path", &self.path)
            .field("headers", &headers)
            .field("body", &String::from_utf8_lossy(&self.body))
            .finish()
    }
}

fn is_secret_header(name: &str) -> bool {
    name.eq_ignore_ascii_case(OPENAI_AUTH_HEADER) || name.eq_ignore_ascii_case(GEMINI_KEY_HEADER)
}

/// Looks up the driver's API key, if it is configured to use one.
pub(crate) fn resolve_credential(config: &DriverConfig) -> Result<Option<String>, DriverError> {
    let Some(var) = &config.credential_env else {
        return Ok(None);
    };
    match std::env::var(var) {
        Ok(value) if !value.is_empty() => Ok(Some(value)),
        _ => Err(DriverError::new(
            config.id.clone(),
            ErrorKind::Auth,
            format!("credential environment variable {var} is not set"),
        )),
    }
}

/// Removes the driver's credential from text bound for logs or callers.
pub(crate) fn redact(config: &DriverConfig, text: String) -> String {
    match config
        .credential_env
        .as_deref()
        .and_then(|var| std::env::var(var).ok())
    {
        Some(secret) if !secret.is_empty() && text.contains(&secret) => {
            text.replace(&secret, "<redacted>")
        }
        _ => text,
    }
}

fn endpoint_path(config: &DriverConfig) -> String {
    config
        .endpoint
        .as_ref()
        .map(|u| u.path().trim_end_matches('/').to_owned())
        .unwrap_or_default()
}

/// Encodes `request` into the provider's chat-completion request.
pub fn format_request(
    config: &DriverConfig,
    request: &AssistantRequest,
) -> Result<WirePayload, DriverError> {
    let credential = resolve_credential(config)?;
    encode(config, request, credential.as_deref())
}

pub(crate) fn encode(
    config: &DriverConfig,
    request: &AssistantRequest,
    credential: Option<&str>,
) -> Result<WirePayload, DriverError> {
    let temperature = request.temperature_override().unwrap_or(config.temperature);
    let max_tokens = request.max_tokens_override().unwrap_or(config.max_output_tokens);
    let mut headers = vec![("content-type".to_owned(), "application/json".to_owned())];

    let (path, body) = match config.provider {
        ProviderKind::OpenaiCompatible => {
            if let Some(key) = credential {
                headers.push((OPENAI_AUTH_HEADER.to_owned(), format!("Bearer {key}")));
            }
            let body = openai::ChatRequest {
                model: &config.model,
                messages: request
                    .messages()
                    .iter()
                    .map(|m| openai::WireMessage {
                        role: role_name(m.role),
                        content: &m.content,
                    })
                    .collect(),
                temperature,
                max_tokens,
            };
            (format!("{}/chat/completions", endpoint_path(config)), to_bytes(&body))
        }
        ProviderKind::GeminiCompatible => {
            if let Some(key) = credential {
                headers.push((GEMINI_KEY_HEADER.to_owned(), key.to_owned()));
            }
            let system: Vec<&str> = request
                .messages()
                .iter()
                .filter(|m| m.role == Role::System)
                .map(|m| m.content.as_str())
                .collect();
            let body = gemini::GenerateRequest {
                contents: request
                    .messages()
                    .iter()
                    .filter(|m| m.role != Role::System)
                    .map(|m| gemini::Content {
                        role: if m.role == Role::Assistant { "model" } else { "user" },
                        parts: vec![gemini::Part { text: &m.content }],
                    })
                    .collect(),
                system_instruction: (!system.is_empty()).then(|| gemini::SystemInstruction {
                    parts: vec![gemini::OwnedPart {
                        text: system.join("\n\n"),
                    }],
                }),
                generation_config: gemini::GenerationConfig {
                    temperature,
                    max_output_tokens: max_tokens,
                },
            };
            (
                format!("{}/models/{}:generateContent", endpoint_path(config), config.model),
                to_bytes(&body),
            )
        }
        ProviderKind::Scripted => {
            return Err(DriverError::new(
                config.id.clone(),
                ErrorKind::MalformedResponse,
                "scripted drivers have no wire format",
            ))
        }
    };

    Ok(WirePayload {
        method: "POST",
        path,
        headers,
        body,
    })
}

fn to_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("wire structs always serialize")
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// Decodes a raw provider reply. Total over arbitrary bytes.
pub fn parse_response(
    config: &DriverConfig,
    status: u16,
    body: &[u8],
    elapsed: Duration,
) -> Result<AssistantResponse, DriverError> {
    let id = config.id.clone();
    let fail = |kind: ErrorKind, message: String| {
        let mut err = DriverError::new(id.clone(), kind, redact(config, message));
        if kind == ErrorKind::Network {
            err.retryable = true;
        }
        err
    };

    match status {
        200..=299 => {}
        401 | 403 => {
            return Err(fail(
                ErrorKind::Auth,
                format!("provider rejected credentials (HTTP {status}){}", provider_message(body)),
            ))
        }
        429 => {
            return Err(fail(
                ErrorKind::RateLimit,
                format!("rate limited (HTTP 429){}", provider_message(body)),
            ))
        }
        500..=599 => {
            return Err(fail(
                ErrorKind::Network,
                format!("provider error (HTTP {status}){}", provider_message(body)),
            ))
        }
        _ => {
            return Err(fail(
                ErrorKind::MalformedResponse,
                format!("unexpected HTTP status {status}{}", provider_message(body)),
            ))
        }
    }

    let decoded = match config.provider {
        ProviderKind::OpenaiCompatible => openai::decode(body),
        ProviderKind::GeminiCompatible => gemini::decode(body),
        ProviderKind::Scripted => Err("scripted drivers have no wire format".to_owned()),
    };
    let (content, finish_reason, token_usage) =
        decoded.map_err(|why| fail(ErrorKind::MalformedResponse, why))?;

    Ok(AssistantResponse {
        driver_id: id,
        finish_reason: if content.is_empty() {
            FinishReason::Other
        } else {
            finish_reason
        },
        content,
        latency_ms: elapsed.as_millis() as u64,
        token_usage,
    })
}

/// Short provider-supplied error message, when the body carries one.
fn provider_message(body: &[u8]) -> String {
    #[derive(Deserialize)]
    struct Envelope {
        error: Option<ErrorBody>,
    }
    #[derive(Deserialize)]
    struct ErrorBody {
        message: Option<String>,
    }

    let message = serde_json::from_slice::<Envelope>(body)
        .ok()
        .and_then(|e| e.error)
        .and_then(|e| e.message);
    match message {
        Some(m) if !m.is_empty() => {
            let short: String = m.chars().take(MAX_PROVIDER_MESSAGE).collect();
            format!(": {short}")
        }
        _ => String::new(),
    }
}

type Decoded = (String, FinishReason, Option<TokenUsage>);

mod openai {
    use super::*;

    #[derive(Serialize)]
    pub(super) struct ChatRequest<'a> {
        pub model: &'a str,
        pub messages: Vec<WireMessage<'a>>,
        pub temperature: f64,
        pub max_tokens: u32,
    }

    #[derive(Serialize)]
    pub(super) struct WireMessage<'a> {
        pub role: &'static str,
        pub content: &'a str,
    }

    #[derive(Deserialize)]
    struct ChatReply {
        choices: Vec<Choice>,
        #[serde(default)]
        usage: Option<Usage>,
    }

    #[derive(Deserialize)]
    struct Choice {
        message: ReplyMessage,
        #[serde(default)]
        finish_reason: Option<String>,
    }

    #[derive(Deserialize)]
    struct ReplyMessage {
        #[serde(default)]
        content: Option<String>,
    }

    #[derive(Deserialize)]
    struct Usage {
        prompt_tokens: u64,
        completion_tokens: u64,
    }

    pub(super) fn decode(body: &[u8]) -> Result<Decoded, String> {
        let reply: ChatReply =
            serde_json::from_slice(body).map_err(|e| format!("unparseable chat completion: {e}"))?;
        let choice = reply
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| "chat completion has no choices".to_owned())?;
        let finish = match choice.finish_reason.as_deref() {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        };
        let usage = reply.usage.map(|u| TokenUsage {
            prompt: u.prompt_tokens,
            completion: u.completion_tokens,
        });
        Ok((choice.message.content.unwrap_or_default(), finish, usage))
    }
}

mod gemini {
    use super::*;

    #[derive(Serialize)]
    #[serde(rename_all = "camelCase")]
    pub(super) struct GenerateRequest<'a> {
        pub contents: Vec<Content<'a>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub system_instruction: Option<SystemInstruction>,
        pub generation_config: GenerationConfig,
    }

    #[derive(Serialize)]
    pub(super) struct Content<'a> {
        pub role: &'static str,
        pub parts: Vec<Part<'a>>,
    }

    #[derive(Serialize)]
    pub(super) struct Part<'a> {
        pub text: &'a str,
    }

    #[derive(Serialize)]
    pub(super) struct SystemInstruction {
        pub parts: Vec<OwnedPart>,
    }

    #[derive(Serialize)]
    pub(super) struct OwnedPart {
        pub text: String,
    }

    #[derive(Serialize)]
    #[serde(rename_all = "camelCase")]
    pub(super) struct GenerationConfig {
        pub temperature: f64,
        pub max_output_tokens: u32,
    }

    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    struct GenerateReply {
        candidates: Vec<Candidate>,
        #[serde(default)]
        usage_metadata: Option<UsageMetadata>,
    }

    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    struct Candidate {
        #[serde(default)]
        content: Option<ReplyContent>,
        #[serde(default)]
        finish_reason: Option<String>,
    }

    #[derive(Deserialize)]
    struct ReplyContent {
        #[serde(default)]
        parts: Vec<ReplyPart>,
    }

    #[derive(Deserialize)]
    struct ReplyPart {
        #[serde(default)]
        text: Option<String>,
    }

    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    struct UsageMetadata {
        #[serde(default)]
        prompt_token_count: u64,
        #[serde(default)]
        candidates_token_count: u64,
    }

    pub(super) fn decode(body: &[u8]) -> Result<Decoded, String> {
        let reply: GenerateReply =
            serde_json::from_slice(body).map_err(|e| format!("unparseable generate-content reply: {e}"))?;
        let candidate = reply
            .candidates
            .into_iter()
            .next()
            .ok_or_else(|| "generate-content reply has no candidates".to_owned())?;
        let text: String = candidate
            .content
            .map(|c| c.parts.into_iter().filter_map(|p| p.text).collect())
            .unwrap_or_default();
        let finish = match candidate.finish_reason.as_deref() {
            Some("STOP") => FinishReason::Stop,
            Some("MAX_TOKENS") => FinishReason::Length,
            _ => FinishReason::Other,
        };
        let usage = reply.usage_metadata.map(|u| TokenUsage {
            prompt: u.prompt_token_count,
            completion: u.candidates_token_count,
        });
        Ok((text, finish, usage))
    }
}

/// Structural check of an encoded request body against the provider's
/// request schema. Independent of the encoder: works on untyped JSON.
pub fn check_request_body(provider: ProviderKind, body: &[u8]) -> Result<(), String> {
    use serde_json::Value;

    let value: Value = serde_json::from_slice(body).map_err(|e| format!("not JSON: {e}"))?;
    let obj = value.as_object().ok_or("body is not an object")?;
    let nonempty_str = |v: Option<&Value>, what: &str| -> Result<(), String> {
        match v.and_then(Value::as_str) {
            Some(s) if !s.is_empty() => Ok(()),
            _ => Err(format!("{what} must be a non-empty string")),
        }
    };

    match provider {
        ProviderKind::OpenaiCompatible => {
            nonempty_str(obj.get("model"), "model")?;
            let messages = obj
                .get("messages")
                .and_then(Value::as_array)
                .filter(|m| !m.is_empty())
                .ok_or("messages must be a non-empty array")?;
            for m in messages {
                match m.get("role").and_then(Value::as_str) {
                    Some("system" | "user" | "assistant") => {}
                    other => return Err(format!("bad message role {other:?}")),
                }
                nonempty_str(m.get("content"), "message content")?;
            }
            obj.get("temperature")
                .and_then(Value::as_f64)
                .ok_or("temperature must be a number")?;
            obj.get("max_tokens")
                .and_then(Value::as_u64)
                .filter(|n| *n > 0)
                .ok_or("max_tokens must be a positive integer")?;
        }
        ProviderKind::GeminiCompatible => {
            let contents = obj
                .get("contents")
                .and_then(Value::as_array)
                .filter(|c| !c.is_empty())
                .ok_or("contents must be a non-empty array")?;
            for c in contents {
                match c.get("role").and_then(Value::as_str) {
                    Some("user" | "model") => {}
                    other => return Err(format!("bad content role {other:?}")),
                }
                let parts = c
                    .get("parts")
                    .and_then(Value::as_array)
                    .filter(|p| !p.is_empty())
                    .ok_or("parts must be a non-empty array")?;
                for p in parts {
                    nonempty_str(p.get("text"), "part text")?;
                }
            }
            if let Some(si) = obj.get("systemInstruction") {
                si.get("parts")
                    .and_then(Value::as_array)
                    .ok_or("systemInstruction.parts must be an array")?;
            }
            let gc = obj
                .get("generationConfig")
                .ok_or("generationConfig missing")?;
            gc.get("temperature")
                .and_then(Value::as_f64)
                .ok_or("generationConfig.temperature must be a number")?;
            gc.get("maxOutputTokens")
                .and_then(Value::as_u64)
                .ok_or("generationConfig.maxOutputTokens must be an integer")?;
        }
        ProviderKind::Scripted => return Err("scripted drivers have no wire format".into()),
    }
    Ok(())
}
