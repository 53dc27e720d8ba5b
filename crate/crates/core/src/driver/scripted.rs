//! Deterministic offline driver.
//!
//! Replays a configured list of steps, each one a delay followed by either a
//! reply or a failure of a given kind. Used for demos without credentials and
//! as the test double for every fan-out and workflow test.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::types::{
    AssistantRequest, AssistantResponse, DriverConfig, DriverError, DriverId, ErrorKind,
    FinishReason,
};
use super::Driver;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Reply(String),
    Error(ErrorKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(flatten)]
    pub outcome: StepOutcome,
}

impl ScriptStep {
    pub fn reply(delay_ms: u64, content: impl Into<String>) -> Self {
        Self {
            delay_ms,
            outcome: StepOutcome::Reply(content.into()),
        }
    }

    pub fn error(delay_ms: u64, kind: ErrorKind) -> Self {
        Self {
            delay_ms,
            outcome: StepOutcome::Error(kind),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustionPolicy {
    #[default]
    RepeatLast,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedBehavior {
    pub steps: Vec<ScriptStep>,
    #[serde(default)]
    pub exhaustion: ExhaustionPolicy,
}

impl ScriptedBehavior {
    pub fn new(steps: Vec<ScriptStep>, exhaustion: ExhaustionPolicy) -> Self {
        Self { steps, exhaustion }
    }

    /// Always answers `content` immediately.
    pub fn reply(content: impl Into<String>) -> Self {
        Self::new(vec![ScriptStep::reply(0, content)], ExhaustionPolicy::RepeatLast)
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("script needs at least one step".into());
        }
        Ok(())
    }
}

struct ScriptState {
    cursor: usize,
    log: Vec<AssistantRequest>,
}

pub struct ScriptedDriver {
    config: DriverConfig,
    behavior: ScriptedBehavior,
    state: Mutex<ScriptState>,
}

impl ScriptedDriver {
    /// Panics if `config` carries no script; validated configs always do.
    pub fn new(config: DriverConfig) -> Self {
        let behavior = config
            .script
            .clone()
            .expect("scripted driver config without a script");
        Self {
            config,
            behavior,
            state: Mutex::new(ScriptState {
                cursor: 0,
                log: Vec::new(),
            }),
        }
    }

    pub fn from_steps(id: DriverId, steps: Vec<ScriptStep>, exhaustion: ExhaustionPolicy) -> Self {
        Self::new(DriverConfig::scripted(id, ScriptedBehavior::new(steps, exhaustion)))
    }

    fn next_step(&self, request: &AssistantRequest) -> Option<ScriptStep> {
        let mut state = self.state.lock().expect("script state poisoned");
        state.log.push(request.clone());
        let index = state.cursor;
        state.cursor += 1;
        match self.behavior.steps.get(index) {
            Some(step) => Some(step.clone()),
            None => match self.behavior.exhaustion {
                ExhaustionPolicy::RepeatLast => self.behavior.steps.last().cloned(),
                ExhaustionPolicy::Error => None,
            },
        }
    }

    /// Number of steps consumed so far.
    pub fn calls(&self) -> usize {
        self.state.lock().expect("script state poisoned").cursor
    }
}

#[async_trait]
impl Driver for ScriptedDriver {
    fn config(&self) -> &DriverConfig {
        &self.config
    }

    async fn send(&self, request: &AssistantRequest) -> Result<AssistantResponse, DriverError> {
        let started = Instant::now();
        let id = self.config.id.clone();
        let Some(step) = self.next_step(request) else {
            return Err(DriverError::new(
                id,
                ErrorKind::ScriptExhausted,
                format!("script exhausted after {} steps", self.behavior.steps.len()),
            ));
        };

        let delay = Duration::from_millis(step.delay_ms);
        if delay > self.config.timeout() {
            tokio::time::sleep(self.config.timeout()).await;
            return Err(DriverError::new(
                id,
                ErrorKind::Timeout,
                format!("no reply within {} ms", self.config.timeout_ms),
            ));
        }
        tokio::time::sleep(delay).await;

        match step.outcome {
            StepOutcome::Reply(content) => Ok(AssistantResponse {
                driver_id: id,
                finish_reason: if content.is_empty() {
                    FinishReason::Other
                } else {
                    FinishReason::Stop
                },
                content,
                latency_ms: started.elapsed().as_millis() as u64,
                token_usage: None,
            }),
            StepOutcome::Error(kind) => Err(DriverError::new(id, kind, format!("scripted {kind} failure"))),
        }
    }

    fn request_log(&self) -> Option<Vec<AssistantRequest>> {
        Some(self.state.lock().expect("script state poisoned").log.clone())
    }
}
