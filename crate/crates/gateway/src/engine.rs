//! The engine behind every action: registry, tasks, workflows and chat
//! sessions built from one [`EngineConfig`].

use std::sync::Arc;

use indexmap::IndexMap;
use multimind_core::driver::{DriverId, ErrorKind};
use multimind_core::manager::{Activity, DriverManager, ManagerError, TargetSelector};
use multimind_core::tasks::{
    parse_verdict, OutputFormat, TaskError, TaskRunner, TaskSpec, TemplateError, CHAT_TASK,
};
use multimind_core::workflow::{Strategy, TaskManager, WorkflowError, WorkflowResult, WorkflowSpec, WorkflowStatus};
use tracing::info;

use crate::annotate::insert_comment;
use crate::chat::{new_session_id, now_ms, ChatSession, ChatTurn, Journal, JournalRecord, SelectError, SessionStore};
use crate::config::{ConfigError, EngineConfig, DOCUMENT_WORKFLOW};
use crate::protocol::{
    ApiError, CommentActionRequest, CommentActionResult, CredentialState, DriverView, Health,
    PostMessageRequest, PostMessageResponse, SelectRequest, TaskRunRequest, TaskRunResponse,
    WorkflowRunRequest,
};

pub struct Engine {
    config: EngineConfig,
    drivers: Arc<DriverManager>,
    tasks: IndexMap<String, TaskSpec>,
    workflows: IndexMap<String, WorkflowSpec>,
    manager: TaskManager,
    sessions: SessionStore,
    journal: Option<Journal>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let drivers = Arc::new(DriverManager::new());
        for d in &config.drivers {
            drivers
                .register(d.clone())
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let tasks = config.task_specs()?;
        let workflows = config.workflow_specs();

        let sessions = SessionStore::default();
        let journal = match &config.journal_path {
            Some(path) => {
                let io = |e: std::io::Error| ConfigError::Io {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                };
                let recovered = Journal::replay(path).map_err(io)?;
                if !recovered.is_empty() {
                    info!(sessions = recovered.len(), "recovered chat sessions from journal");
                }
                for s in recovered {
                    sessions.insert(s);
                }
                Some(Journal::open(path).map_err(io)?)
            }
            None => None,
        };

        Ok(Self {
            manager: TaskManager::new(TaskRunner::new(drivers.clone())),
            config,
            drivers,
            tasks,
            workflows,
            sessions,
            journal,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn drivers(&self) -> &Arc<DriverManager> {
        &self.drivers
    }

    pub fn tasks(&self) -> &IndexMap<String, TaskSpec> {
        &self.tasks
    }

    pub fn workflows(&self) -> &IndexMap<String, WorkflowSpec> {
        &self.workflows
    }

    pub fn health(&self) -> Health {
        Health { status: "ok".into() }
    }

    pub fn driver_views(&self) -> Vec<DriverView> {
        self.drivers
            .list()
            .into_iter()
            .map(|config| {
                let credential = match &config.credential_env {
                    None => CredentialState::None,
                    Some(var) if std::env::var(var).is_ok_and(|v| !v.is_empty()) => CredentialState::Set,
                    Some(_) => CredentialState::Missing,
                };
                let activity = self.drivers.activity(&config.id).unwrap_or_default();
                DriverView {
                    config,
                    credential,
                    activity,
                }
            })
            .collect()
    }

    pub fn activity(&self, id: &str) -> Result<Activity, ApiError> {
        let unknown = || ApiError::not_found(format!("unknown driver {id}"));
        let id = DriverId::new(id).map_err(|_| unknown())?;
        self.drivers.activity(&id).map_err(|_| unknown())
    }

    fn task(&self, id: &str) -> Result<&TaskSpec, ApiError> {
        self.tasks
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown task {id}")))
    }

    fn workflow(&self, id: &str) -> Result<&WorkflowSpec, ApiError> {
        self.workflows
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown workflow {id}")))
    }

    fn with_targets(&self, spec: &TaskSpec, targets: &Option<TargetSelector>) -> Result<TaskSpec, ApiError> {
        let mut spec = spec.clone();
        if let Some(t) = targets {
            spec.targets = t.clone();
        }
        self.drivers.check_targets(&spec.targets).map_err(manager_error)?;
        Ok(spec)
    }

    /// Runs the documentation workflow for a selection and, when asked and
    /// accepted, returns the file with the comment inserted.
    pub async fn comment_action(&self, req: CommentActionRequest) -> Result<CommentActionResult, ApiError> {
        let workflow_id = req
            .workflow
            .as_deref()
            .or(self.config.comment_workflow.as_deref())
            .unwrap_or(DOCUMENT_WORKFLOW);
        let Strategy::IterativeRefine {
            generator,
            verifier,
            max_iterations,
        } = &self.workflow(workflow_id)?.strategy
        else {
            return Err(ApiError::invalid(format!(
                "workflow {workflow_id} is not an iterative_refine workflow"
            )));
        };
        let max = req.max_iterations.unwrap_or(*max_iterations);
        if max == 0 {
            return Err(ApiError::invalid("max_iterations must be at least 1"));
        }

        let content = match &req.file_content {
            Some(c) => c.clone(),
            None => std::fs::read_to_string(&req.selection.file_path).map_err(|e| {
                ApiError::invalid(format!("cannot read {}: {e}", req.selection.file_path.display()))
            })?,
        };
        // reject stale or out-of-range selections before any driver call
        req.selection
            .check_against(&content)
            .map_err(|e| ApiError::invalid(e.to_string()))?;

        let generator = self.task(generator)?;
        let verifier = self.task(verifier)?;
        let result = self
            .manager
            .run_iterative_refine(generator, verifier, &req.selection, max)
            .await
            .map_err(workflow_error)?;

        let annotated_file = match (&result.status, &result.final_output) {
            (WorkflowStatus::Accepted, Some(comment)) if req.apply => Some(
                insert_comment(&content, req.selection.start_line, comment)
                    .map_err(|e| ApiError::invalid(e.to_string()))?,
            ),
            _ => None,
        };
        let errors = result.driver_errors();
        Ok(CommentActionResult {
            status: result.status,
            comment: result.final_output,
            feedback: result.feedback,
            annotated_file,
            iterations: result.iterations,
            trace: result.trace,
            errors,
        })
    }

    pub async fn run_task(&self, id: &str, req: TaskRunRequest) -> Result<TaskRunResponse, ApiError> {
        let spec = self.with_targets(self.task(id)?, &req.targets)?;
        let result = self
            .manager
            .runner()
            .run(&spec, &req.bindings, &req.history)
            .await
            .map_err(task_error)?;
        let verdict = match spec.output {
            OutputFormat::Verdict => result.output().map(parse_verdict),
            _ => None,
        };
        Ok(TaskRunResponse { result, verdict })
    }

    pub async fn run_workflow(&self, id: &str, req: WorkflowRunRequest) -> Result<WorkflowResult, ApiError> {
        let workflow = self.workflow(id)?;
        let specs = |ids: &[String]| -> Result<Vec<TaskSpec>, ApiError> {
            ids.iter().map(|t| self.task(t).cloned()).collect()
        };
        let input = || {
            req.input
                .as_deref()
                .ok_or_else(|| ApiError::invalid(format!("workflow {id} needs an input")))
        };
        let result = match &workflow.strategy {
            Strategy::Sequential { steps } => {
                self.manager
                    .run_sequential_with(&specs(steps)?, input()?, &req.bindings)
                    .await
            }
            Strategy::Parallel { steps } => {
                self.manager
                    .run_parallel_with(&specs(steps)?, input()?, &req.bindings)
                    .await
            }
            Strategy::IterativeRefine {
                generator,
                verifier,
                max_iterations,
            } => {
                let selection = req
                    .selection
                    .as_ref()
                    .ok_or_else(|| ApiError::invalid(format!("workflow {id} needs a selection")))?;
                self.manager
                    .run_iterative_refine_with(
                        self.task(generator)?,
                        self.task(verifier)?,
                        selection,
                        req.max_iterations.unwrap_or(*max_iterations),
                        &req.bindings,
                    )
                    .await
            }
        };
        result.map_err(workflow_error)
    }

    pub fn create_session(&self) -> ChatSession {
        let session = ChatSession::new(new_session_id());
        self.journal(JournalRecord::SessionCreated {
            session_id: session.session_id.clone(),
            created_at: session.created_at,
        });
        self.sessions.insert(session.clone());
        session
    }

    pub async fn session(&self, id: &str) -> Result<ChatSession, ApiError> {
        Ok(self.session_handle(id)?.lock().await.clone())
    }

    fn session_handle(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<ChatSession>>, ApiError> {
        self.sessions
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown chat session {id}")))
    }

    /// Sends a chat turn to every targeted driver over the session's
    /// selected history. Turns of one session are serialized.
    pub async fn post_message(&self, id: &str, req: PostMessageRequest) -> Result<PostMessageResponse, ApiError> {
        let handle = self.session_handle(id)?;
        let mut session = handle.lock().await;
        if req.text.trim().is_empty() {
            return Err(ApiError::invalid("message text is empty"));
        }
        let spec = self.with_targets(self.task(CHAT_TASK)?, &req.targets)?;
        let candidates = self
            .manager
            .runner()
            .run_open_task(&spec, &req.text, &session.history())
            .await
            .map_err(task_error)?;

        let turn = ChatTurn {
            user_text: req.text,
            candidates,
            selected_driver: None,
            timestamp: now_ms(),
        };
        self.journal(JournalRecord::Turn {
            session_id: session.session_id.clone(),
            turn: turn.clone(),
        });
        session.turns.push(turn.clone());
        Ok(PostMessageResponse {
            turn_index: session.turns.len() - 1,
            turn,
        })
    }

    pub async fn select(&self, id: &str, req: SelectRequest) -> Result<ChatSession, ApiError> {
        let handle = self.session_handle(id)?;
        let mut session = handle.lock().await;
        let before = session.turns.get(req.turn_index).and_then(|t| t.selected_driver.clone());
        session.select(req.turn_index, &req.driver_id).map_err(|e| match e {
            SelectError::UnknownTurn { .. } => ApiError::not_found(e.to_string()),
            _ => ApiError::invalid(e.to_string()),
        })?;
        if before.as_ref() != Some(&req.driver_id) {
            self.journal(JournalRecord::Selected {
                session_id: session.session_id.clone(),
                turn_index: req.turn_index,
                driver_id: req.driver_id,
            });
        }
        Ok(session.clone())
    }

    fn journal(&self, record: JournalRecord) {
        if let Some(j) = &self.journal {
            j.append(&record);
        }
    }
}

fn manager_error(e: ManagerError) -> ApiError {
    match e {
        ManagerError::UnknownDriver(_) | ManagerError::EmptyTargets | ManagerError::DuplicateId(_) | ManagerError::InvalidConfig(_) => {
            ApiError::invalid(e.to_string())
        }
    }
}

fn task_error(e: TaskError) -> ApiError {
    match e {
        TaskError::Targets(m) => manager_error(m),
        TaskError::Template(TemplateError::Io { .. }) => {
            ApiError::new(crate::protocol::ApiErrorKind::Internal, e.to_string())
        }
        other => ApiError::invalid(other.to_string()),
    }
}

fn workflow_error(e: WorkflowError) -> ApiError {
    match e {
        WorkflowError::Task(t) => task_error(t),
        WorkflowError::InvalidSpec(m) => ApiError::invalid(m),
    }
}

/// True when every recorded failure is a driver-side failure (network,
/// auth, timeouts and the like) rather than a content problem.
pub fn failed_on_drivers(errors: &[multimind_core::driver::DriverError]) -> bool {
    !errors.is_empty() && errors.iter().any(|e| e.kind != ErrorKind::Cancelled)
}
