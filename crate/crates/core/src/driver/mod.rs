//! Drivers: one adapter per assistant instance.
//!
//! A driver turns a provider-neutral [`AssistantRequest`] into the wire
//! exchange its provider expects and normalizes the reply into an
//! [`AssistantResponse`] or a [`DriverError`] from a fixed taxonomy.
//! Drivers hold no conversation state; every `send` is independent.

mod http;
mod scripted;
mod types;
pub mod wire;

use std::sync::Arc;

use async_trait::async_trait;

pub use http::{HttpDriver, RETRY_BACKOFF};
pub use scripted::{ExhaustionPolicy, ScriptStep, ScriptedBehavior, ScriptedDriver, StepOutcome};
pub use types::{
    AssistantRequest, AssistantResponse, ConfigViolation, DriverConfig, DriverError, DriverId,
    ErrorKind, FinishReason, InvalidDriverId, InvalidRequest, Message, ProviderKind, Role,
    TokenUsage,
};
pub use wire::{format_request, parse_response, WirePayload};

#[async_trait]
pub trait Driver: Send + Sync {
    fn config(&self) -> &DriverConfig;

    fn id(&self) -> &DriverId {
        &self.config().id
    }

    /// Performs one complete request/response exchange.
    ///
    /// Honors the configured timeout as a hard deadline. Dropping the future
    /// abandons the exchange.
    async fn send(&self, request: &AssistantRequest) -> Result<AssistantResponse, DriverError>;

    /// Requests received so far, for drivers that keep them (scripted only).
    fn request_log(&self) -> Option<Vec<AssistantRequest>> {
        None
    }
}

/// Builds the driver described by a validated config.
pub fn build_driver(config: DriverConfig) -> Result<Arc<dyn Driver>, ConfigViolation> {
    config.validate()?;
    Ok(match config.provider {
        ProviderKind::Scripted => Arc::new(ScriptedDriver::new(config)),
        ProviderKind::OpenaiCompatible | ProviderKind::GeminiCompatible => {
            Arc::new(HttpDriver::new(config)?)
        }
    })
}

/// One-shot send through a freshly built driver.
pub async fn send(config: &DriverConfig, request: &AssistantRequest) -> Result<AssistantResponse, DriverError> {
    let driver = build_driver(config.clone()).map_err(|violation| {
        DriverError::new(config.id.clone(), ErrorKind::MalformedResponse, violation.reason)
    })?;
    driver.send(request).await
}
