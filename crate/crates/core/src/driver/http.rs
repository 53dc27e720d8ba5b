use std::time::{Duration, Instant};

use async_trait::async_trait;
use tracing::debug;

use super::types::{AssistantRequest, ConfigViolation, AssistantResponse, DriverConfig, DriverError, ErrorKind};
use super::wire::{self, WirePayload};
use super::Driver;

/// Pause before the single retry of a retryable failure.
pub const RETRY_BACKOFF: Duration = Duration::from_millis(250);

/// Driver for OpenAI- and Gemini-compatible HTTP endpoints.
pub struct HttpDriver {
    config: DriverConfig,
    client: reqwest::Client,
}

impl HttpDriver {
    pub fn new(config: DriverConfig) -> Result<Self, ConfigViolation> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| ConfigViolation {
                driver_id: config.id.clone(),
                reason: format!("cannot build HTTP client: {e}"),
            })?;
        Ok(Self { config, client })
    }

    async fn exchange(&self, payload: &WirePayload, started: Instant) -> Result<AssistantResponse, DriverError> {
        let mut url = self
            .config
            .endpoint
            .clone()
            .expect("network driver config always has an endpoint");
        url.set_path(&payload.path);

        let mut builder = self.client.post(url).body(payload.body.clone());
        for (name, value) in &payload.headers {
            builder = builder.header(name, value);
        }
        debug!(driver = %self.config.id, path = %payload.path, "sending request");

        let response = builder.send().await.map_err(|e| self.transport_error(e))?;
        let status = response.status().as_u16();
        let body = response.bytes().await.map_err(|e| self.transport_error(e))?;
        wire::parse_response(&self.config, status, &body, started.elapsed())
    }

    fn transport_error(&self, error: reqwest::Error) -> DriverError {
        let kind = if error.is_timeout() {
            ErrorKind::Timeout
        } else {
            ErrorKind::Network
        };
        // reqwest's Display carries the URL but never headers
        DriverError::new(
            self.config.id.clone(),
            kind,
            wire::redact(&self.config, format!("request failed: {error}")),
        )
    }

    async fn send_with_retry(&self, request: &AssistantRequest, started: Instant) -> Result<AssistantResponse, DriverError> {
        let payload = wire::format_request(&self.config, request)?;
        match self.exchange(&payload, started).await {
            Err(e) if e.retryable && e.kind != ErrorKind::Timeout => {
                debug!(driver = %self.config.id, kind = %e.kind, "retrying once");
                tokio::time::sleep(RETRY_BACKOFF).await;
                self.exchange(&payload, started).await
            }
            other => other,
        }
    }
}

#[async_trait]
impl Driver for HttpDriver {
    fn config(&self) -> &DriverConfig {
        &self.config
    }

    async fn send(&self, request: &AssistantRequest) -> Result<AssistantResponse, DriverError> {
        let started = Instant::now();
        match tokio::time::timeout(self.config.timeout(), self.send_with_retry(request, started)).await {
            Ok(result) => result,
            Err(_) => Err(DriverError::new(
                self.config.id.clone(),
                ErrorKind::Timeout,
                format!("no reply within {} ms", self.config.timeout_ms),
            )),
        }
    }
}
