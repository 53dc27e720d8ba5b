//! Tasks: prompt construction, dispatch and result interpretation for each
//! concrete job.
//!
//! A [`TaskSpec`] is immutable data: a template, how to talk to the driver
//! manager (first answer vs. all answers), which drivers to address and how
//! to post-process the reply. [`TaskRunner`] executes specs.

mod extract;
mod selection;
mod template;
mod verdict;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver::{AssistantRequest, AssistantResponse, DriverError, InvalidRequest, Message};
use crate::manager::{DriverManager, FanoutOutcome, ManagerError, TargetSelector};

pub use extract::{extract_comment, fenced_block, strip_code_fences};
pub use selection::{language_for_path, CodeSelection, SelectionError};
pub use template::{bindings, Bindings, PromptTemplate, TemplateError};
pub use verdict::{parse_verdict, Verdict};

pub const COMMENT_TASK: &str = "comment";
pub const DOC_QUALITY_TASK: &str = "doc_quality";
pub const CODE_GENERATION_TASK: &str = "code_generation";
pub const DOC_REVIEW_TASK: &str = "doc_review";
pub const CHAT_TASK: &str = "chat";

pub const BUILTIN_TASKS: [&str; 5] = [
    COMMENT_TASK,
    DOC_QUALITY_TASK,
    CODE_GENERATION_TASK,
    DOC_REVIEW_TASK,
    CHAT_TASK,
];

pub const GENERATION_TEMPERATURE: f64 = 0.2;
pub const VERDICT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Defined,
    OpenEnded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// Proceed with the first successful answer (driver manager `call_back`).
    ContinueAfterFirst,
    /// Wait for every targeted driver (driver manager `fetch_all`).
    ContinueAfterLast,
}

/// How the selected reply is post-processed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Text,
    /// Keep only the comment: unwrap fences, drop echoes of `{{code}}`.
    DocComment,
    /// Unwrap the first fenced code block.
    Code,
    /// `VERDICT: PASS|FAIL` reply, parsed by the caller.
    Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    pub mode: InteractionMode,
    #[serde(default)]
    pub targets: TargetSelector,
    pub template: PromptTemplate,
    pub temperature: f64,
    #[serde(default)]
    pub output: OutputFormat,
}

impl TaskSpec {
    pub fn with_targets(mut self, targets: TargetSelector) -> Self {
        self.targets = targets;
        self
    }

    pub fn with_mode(mut self, mode: InteractionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    /// Built-in task with its shipped prompt.
    pub fn builtin(id: &str) -> Option<TaskSpec> {
        let (system, user) = builtin_prompt(id)?;
        let template = PromptTemplate::new(system, user).expect("shipped prompts are well-formed");
        Some(builtin_spec(id, template))
    }

    /// Built-in task with its prompt loaded from `dir`, falling back to the
    /// shipped prompt when `dir` has no `<id>.user.txt`.
    pub fn builtin_from_dir(id: &str, dir: &Path) -> Result<Option<TaskSpec>, TemplateError> {
        if builtin_prompt(id).is_none() {
            return Ok(None);
        }
        if !dir.join(format!("{id}.user.txt")).exists() {
            return Ok(TaskSpec::builtin(id));
        }
        let template = PromptTemplate::load(dir, id)?;
        Ok(Some(builtin_spec(id, template)))
    }
}

fn builtin_prompt(id: &str) -> Option<(&'static str, &'static str)> {
    Some(match id {
        COMMENT_TASK => (
            include_str!("../../prompts/comment.system.txt"),
            include_str!("../../prompts/comment.user.txt"),
        ),
        DOC_QUALITY_TASK => (
            include_str!("../../prompts/doc_quality.system.txt"),
            include_str!("../../prompts/doc_quality.user.txt"),
        ),
        CODE_GENERATION_TASK => (
            include_str!("../../prompts/code_generation.system.txt"),
            include_str!("../../prompts/code_generation.user.txt"),
        ),
        DOC_REVIEW_TASK => (
            include_str!("../../prompts/doc_review.system.txt"),
            include_str!("../../prompts/doc_review.user.txt"),
        ),
        CHAT_TASK => ("", include_str!("../../prompts/chat.user.txt")),
        _ => return None,
    })
}

fn builtin_spec(id: &str, template: PromptTemplate) -> TaskSpec {
    let (kind, mode, temperature, output) = match id {
        COMMENT_TASK | DOC_REVIEW_TASK => (
            TaskKind::Defined,
            InteractionMode::ContinueAfterFirst,
            GENERATION_TEMPERATURE,
            OutputFormat::DocComment,
        ),
        DOC_QUALITY_TASK => (
            TaskKind::Defined,
            InteractionMode::ContinueAfterFirst,
            VERDICT_TEMPERATURE,
            OutputFormat::Verdict,
        ),
        CODE_GENERATION_TASK => (
            TaskKind::Defined,
            InteractionMode::ContinueAfterFirst,
            GENERATION_TEMPERATURE,
            OutputFormat::Code,
        ),
        _ => (
            TaskKind::OpenEnded,
            InteractionMode::ContinueAfterLast,
            GENERATION_TEMPERATURE,
            OutputFormat::Text,
        ),
    };
    TaskSpec {
        id: id.to_owned(),
        kind,
        mode,
        targets: TargetSelector::Any,
        template,
        temperature,
        output,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub status: TaskStatus,
    /// The chosen response, post-processed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<AssistantResponse>,
    pub outcome: FanoutOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl TaskResult {
    pub fn output(&self) -> Option<&str> {
        self.selected.as_ref().map(|r| r.content.as_str())
    }

    pub fn is_ok(&self) -> bool {
        self.status == TaskStatus::Ok
    }

    pub fn driver_errors(&self) -> Vec<DriverError> {
        self.outcome.errors().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("invalid task input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Request(#[from] InvalidRequest),
    #[error(transparent)]
    Targets(#[from] ManagerError),
    #[error("task {task_id}: no driver produced a response")]
    NoResponse {
        task_id: String,
        errors: Vec<DriverError>,
    },
}

/// Executes task specs against a driver manager.
#[derive(Clone)]
pub struct TaskRunner {
    drivers: Arc<DriverManager>,
}

impl TaskRunner {
    pub fn new(drivers: Arc<DriverManager>) -> Self {
        Self { drivers }
    }

    pub fn drivers(&self) -> &Arc<DriverManager> {
        &self.drivers
    }

    async fn dispatch(&self, spec: &TaskSpec, messages: Vec<Message>) -> Result<FanoutOutcome, TaskError> {
        let request = AssistantRequest::new(messages)?
            .with_temperature(spec.temperature)?
            .with_correlation_id(spec.id.clone());
        let outcome = match spec.mode {
            InteractionMode::ContinueAfterFirst => self.drivers.call_back(&request, &spec.targets).await?,
            InteractionMode::ContinueAfterLast => self.drivers.fetch_all(&request, &spec.targets).await?,
        };
        Ok(outcome)
    }

    /// Renders `spec` with `bindings`, puts `history` between the system
    /// prompt and the new user turn, dispatches per the task mode and
    /// post-processes the selected reply.
    pub async fn run(&self, spec: &TaskSpec, bindings: &Bindings, history: &[Message]) -> Result<TaskResult, TaskError> {
        let rendered = spec.template.render(bindings)?;
        let mut messages = Vec::with_capacity(rendered.len() + history.len());
        let mut rendered = rendered.into_iter().peekable();
        if let Some(system) = rendered.next_if(|m| m.role == crate::driver::Role::System) {
            messages.push(system);
        }
        messages.extend(history.iter().cloned());
        messages.extend(rendered);

        let outcome = self.dispatch(spec, messages).await?;
        let chosen = match spec.mode {
            InteractionMode::ContinueAfterFirst => outcome.winning_response(),
            InteractionMode::ContinueAfterLast => outcome.first_response(),
        }
        .cloned();

        let Some(mut selected) = chosen else {
            return Ok(TaskResult {
                task_id: spec.id.clone(),
                status: TaskStatus::Failed,
                selected: None,
                outcome,
                failure: Some("no driver produced a response".into()),
            });
        };

        selected.content = match spec.output {
            OutputFormat::Text | OutputFormat::Verdict => selected.content,
            OutputFormat::Code => strip_code_fences(&selected.content),
            OutputFormat::DocComment => {
                extract_comment(&selected.content, bindings.get("code").map_or("", String::as_str))
            }
        };
        if spec.output == OutputFormat::DocComment && selected.content.is_empty() {
            return Ok(TaskResult {
                task_id: spec.id.clone(),
                status: TaskStatus::Failed,
                selected: None,
                outcome,
                failure: Some(format!("reply from {} contained no comment", selected.driver_id)),
            });
        }

        Ok(TaskResult {
            task_id: spec.id.clone(),
            status: TaskStatus::Ok,
            selected: Some(selected),
            outcome,
            failure: None,
        })
    }

    /// Generates a documentation comment for `selection`. `feedback` is the
    /// previous verdict's feedback, empty on a first attempt.
    pub async fn run_comment_task(&self, spec: &TaskSpec, selection: &CodeSelection, feedback: &str) -> Result<TaskResult, TaskError> {
        selection.validate()?;
        let b = bindings([
            ("lang", &selection.language_id),
            ("code", &selection.text),
            ("feedback", feedback),
        ]);
        self.run(spec, &b, &[]).await
    }

    /// Asks the verifier whether `comment` documents `selection` adequately.
    pub async fn run_doc_quality_task(&self, spec: &TaskSpec, selection: &CodeSelection, comment: &str) -> Result<Verdict, TaskError> {
        selection.validate()?;
        if comment.trim().is_empty() {
            return Err(TaskError::InvalidInput("comment to verify is empty".into()));
        }
        let b = bindings([
            ("lang", &selection.language_id),
            ("code", &selection.text),
            ("comment", comment),
        ]);
        let result = self.run(spec, &b, &[]).await?;
        match result.output() {
            Some(raw) => Ok(parse_verdict(raw)),
            None => Err(TaskError::NoResponse {
                task_id: result.task_id.clone(),
                errors: result.driver_errors(),
            }),
        }
    }

    pub async fn run_code_generation_task(&self, spec: &TaskSpec, spec_text: &str, language_id: &str) -> Result<TaskResult, TaskError> {
        if spec_text.trim().is_empty() {
            return Err(TaskError::InvalidInput("code specification is empty".into()));
        }
        let b = bindings([("lang", language_id), ("spec", spec_text)]);
        self.run(spec, &b, &[]).await
    }

    pub async fn run_doc_review_task(
        &self,
        spec: &TaskSpec,
        selection: &CodeSelection,
        existing_comment: &str,
        feedback: &str,
    ) -> Result<TaskResult, TaskError> {
        selection.validate()?;
        if existing_comment.trim().is_empty() {
            return Err(TaskError::InvalidInput("existing comment is empty".into()));
        }
        let b = bindings([
            ("lang", &selection.language_id),
            ("code", &selection.text),
            ("current_doc", existing_comment),
            ("feedback", feedback),
        ]);
        self.run(spec, &b, &[]).await
    }

    /// Sends `history` plus the new user turn to every target and returns
    /// all candidates unranked.
    pub async fn run_open_task(&self, spec: &TaskSpec, user_text: &str, history: &[Message]) -> Result<FanoutOutcome, TaskError> {
        if user_text.trim().is_empty() {
            return Err(TaskError::InvalidInput("message is empty".into()));
        }
        let rendered = spec.template.render(&bindings([("message", user_text)]))?;
        let mut messages: Vec<Message> = Vec::with_capacity(history.len() + rendered.len());
        let mut rendered = rendered.into_iter().peekable();
        if let Some(system) = rendered.next_if(|m| m.role == crate::driver::Role::System) {
            messages.push(system);
        }
        messages.extend(history.iter().cloned());
        messages.extend(rendered);
        // chat always collects every candidate for the human to choose from
        let spec = spec.clone().with_mode(InteractionMode::ContinueAfterLast);
        self.dispatch(&spec, messages).await
    }
}
