//! Where commands run: an engine inside this process, or a gateway daemon
//! reached over HTTP. Both speak the same request and response types.

use std::sync::Arc;

use async_trait::async_trait;
use multimind_core::manager::Activity;
use multimind_core::workflow::WorkflowResult;
use multimind_gateway::chat::ChatSession;
use multimind_gateway::protocol::{
    ApiError, CommentActionRequest, CommentActionResult, DriverView, PostMessageRequest, PostMessageResponse,
    SelectRequest, TaskRunRequest, TaskRunResponse, WorkflowRunRequest,
};
use multimind_gateway::Engine;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("{0}")]
    Api(ApiError),
    #[error("cannot reach gateway: {0}")]
    Network(String),
    #[error("unexpected gateway reply: {0}")]
    Protocol(String),
}

impl From<ApiError> for BackendError {
    fn from(e: ApiError) -> Self {
        BackendError::Api(e)
    }
}

#[async_trait]
pub trait Backend: Send + Sync {
    async fn drivers(&self) -> Result<Vec<DriverView>, BackendError>;
    async fn activity(&self, driver: &str) -> Result<Activity, BackendError>;
    async fn comment(&self, req: CommentActionRequest) -> Result<CommentActionResult, BackendError>;
    async fn run_task(&self, task: &str, req: TaskRunRequest) -> Result<TaskRunResponse, BackendError>;
    async fn run_workflow(&self, workflow: &str, req: WorkflowRunRequest) -> Result<WorkflowResult, BackendError>;
    async fn create_session(&self) -> Result<ChatSession, BackendError>;
    async fn post_message(&self, session: &str, req: PostMessageRequest) -> Result<PostMessageResponse, BackendError>;
    async fn select(&self, session: &str, req: SelectRequest) -> Result<ChatSession, BackendError>;
}

pub struct Embedded(pub Arc<Engine>);

#[async_trait]
impl Backend for Embedded {
    async fn drivers(&self) -> Result<Vec<DriverView>, BackendError> {
        Ok(self.0.driver_views())
    }

    async fn activity(&self, driver: &str) -> Result<Activity, BackendError> {
        Ok(self.0.activity(driver)?)
    }

    async fn comment(&self, req: CommentActionRequest) -> Result<CommentActionResult, BackendError> {
        Ok(self.0.comment_action(req).await?)
    }

    async fn run_task(&self, task: &str, req: TaskRunRequest) -> Result<TaskRunResponse, BackendError> {
        Ok(self.0.run_task(task, req).await?)
    }

    async fn run_workflow(&self, workflow: &str, req: WorkflowRunRequest) -> Result<WorkflowResult, BackendError> {
        Ok(self.0.run_workflow(workflow, req).await?)
    }

    async fn create_session(&self) -> Result<ChatSession, BackendError> {
        Ok(self.0.create_session())
    }

    async fn post_message(&self, session: &str, req: PostMessageRequest) -> Result<PostMessageResponse, BackendError> {
        Ok(self.0.post_message(session, req).await?)
    }

    async fn select(&self, session: &str, req: SelectRequest) -> Result<ChatSession, BackendError> {
        Ok(self.0.select(session, req).await?)
    }
}

pub struct Remote {
    base: String,
    token: Option<String>,
    client: reqwest::Client,
}

impl Remote {
    /// `addr` is `host:port`; a scheme is added when missing.
    pub fn new(addr: &str, token: Option<String>) -> Self {
        let base = if addr.contains("://") {
            addr.trim_end_matches('/').to_owned()
        } else {
            format!("http://{addr}")
        };
        Self {
            base,
            token,
            client: reqwest::Client::new(),
        }
    }

    async fn call<T: DeserializeOwned>(
        &self,
        method: reqwest::Method,
        path: &str,
        body: Option<&impl Serialize>,
    ) -> Result<T, BackendError> {
        let mut request = self.client.request(method, format!("{}{path}", self.base));
        if let Some(token) = &self.token {
            request = request.header("authorization", format!("Bearer {token}"));
        }
        if let Some(body) = body {
            let bytes = serde_json::to_vec(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
            request = request.header("content-type", "application/json").body(bytes);
        }
        let response = request.send().await.map_err(|e| BackendError::Network(e.to_string()))?;
        let status = response.status();
        let bytes = response.bytes().await.map_err(|e| BackendError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(match serde_json::from_slice::<ApiError>(&bytes) {
                Ok(e) => BackendError::Api(e),
                Err(_) => BackendError::Protocol(format!("HTTP {status}")),
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| BackendError::Protocol(e.to_string()))
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, BackendError> {
        self.call(reqwest::Method::GET, path, None::<&()>).await
    }

    async fn post<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T, BackendError> {
        self.call(reqwest::Method::POST, path, Some(body)).await
    }
}

/// Escapes one URL path segment.
fn segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

#[async_trait]
impl Backend for Remote {
    async fn drivers(&self) -> Result<Vec<DriverView>, BackendError> {
        self.get("/v1/drivers").await
    }

    async fn activity(&self, driver: &str) -> Result<Activity, BackendError> {
        self.get(&format!("/v1/drivers/{}/activity", segment(driver))).await
    }

    async fn comment(&self, req: CommentActionRequest) -> Result<CommentActionResult, BackendError> {
        self.post("/v1/actions/comment", &req).await
    }

    async fn run_task(&self, task: &str, req: TaskRunRequest) -> Result<TaskRunResponse, BackendError> {
        self.post(&format!("/v1/tasks/{}/run", segment(task)), &req).await
    }

    async fn run_workflow(&self, workflow: &str, req: WorkflowRunRequest) -> Result<WorkflowResult, BackendError> {
        self.post(&format!("/v1/workflows/{}/run", segment(workflow)), &req).await
    }

    async fn create_session(&self) -> Result<ChatSession, BackendError> {
        self.post("/v1/chat/sessions", &serde_json::json!({})).await
    }

    async fn post_message(&self, session: &str, req: PostMessageRequest) -> Result<PostMessageResponse, BackendError> {
        self.post(&format!("/v1/chat/sessions/{}/messages", segment(session)), &req).await
    }

    async fn select(&self, session: &str, req: SelectRequest) -> Result<ChatSession, BackendError> {
        self.post(&format!("/v1/chat/sessions/{}/select", segment(session)), &req).await
    }
}
