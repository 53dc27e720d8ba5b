//! Request and response bodies of the JSON API. The CLI uses the same types
//! for its embedded and daemon-backed modes.

use multimind_core::driver::{DriverConfig, DriverError, Message};
use multimind_core::manager::{Activity, TargetSelector};
use multimind_core::tasks::{Bindings, CodeSelection, TaskResult, Verdict};
use multimind_core::workflow::{TraceEntry, WorkflowStatus};
use serde::{Deserialize, Serialize};

use crate::chat::ChatTurn;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredentialState {
    /// The driver uses no credential.
    None,
    Set,
    Missing,
}

/// Registry entry as shown to clients. Credential values never appear; only
/// whether the configured variable is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverView {
    pub config: DriverConfig,
    pub credential: CredentialState,
    pub activity: Activity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentActionRequest {
    pub selection: CodeSelection,
    /// Refine workflow to run; defaults to the configured comment workflow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<String>,
    #[serde(default)]
    pub apply: bool,
    /// Current file text. When absent the engine reads `selection.file_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentActionResult {
    pub status: WorkflowStatus,
    #[serde(default)]
    pub comment: Option<String>,
    #[serde(default)]
    pub feedback: Option<String>,
    /// Whole file with the comment inserted; only for accepted, applied runs.
    #[serde(default)]
    pub annotated_file: Option<String>,
    pub iterations: u32,
    pub trace: Vec<TraceEntry>,
    #[serde(default)]
    pub errors: Vec<DriverError>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskRunRequest {
    #[serde(default)]
    pub bindings: Bindings,
    #[serde(default)]
    pub history: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<TargetSelector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRunResponse {
    pub result: TaskResult,
    /// Parsed verdict, for verdict-style tasks that produced a reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowRunRequest {
    /// Initial input of sequential and parallel workflows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    /// Code the refine workflow documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<CodeSelection>,
    /// Extra bindings available to every step.
    #[serde(default)]
    pub bindings: Bindings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostMessageRequest {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<TargetSelector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostMessageResponse {
    pub turn_index: usize,
    pub turn: ChatTurn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRequest {
    pub turn_index: usize,
    pub driver_id: multimind_core::driver::DriverId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiErrorKind {
    Unauthorized,
    NotFound,
    MethodNotAllowed,
    MalformedJson,
    PayloadTooLarge,
    InvalidInput,
    Internal,
}

impl ApiErrorKind {
    pub fn status(self) -> u16 {
        match self {
            ApiErrorKind::Unauthorized => 401,
            ApiErrorKind::NotFound => 404,
            ApiErrorKind::MethodNotAllowed => 405,
            ApiErrorKind::MalformedJson => 400,
            ApiErrorKind::PayloadTooLarge => 413,
            ApiErrorKind::InvalidInput => 422,
            ApiErrorKind::Internal => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub kind: ApiErrorKind,
    pub message: String,
}

impl ApiError {
    pub fn new(kind: ApiErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ApiErrorKind::NotFound, message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ApiErrorKind::InvalidInput, message)
    }
}
