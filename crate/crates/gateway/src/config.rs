//! `multimind.json`: drivers, task overrides, workflows and service settings.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use multimind_core::driver::{DriverConfig, DriverId};
use multimind_core::manager::TargetSelector;
use multimind_core::tasks::{
    InteractionMode, OutputFormat, PromptTemplate, TaskKind, TaskSpec, BUILTIN_TASKS, COMMENT_TASK,
    DOC_QUALITY_TASK, GENERATION_TEMPERATURE,
};
use multimind_core::workflow::{Strategy, WorkflowSpec, DEFAULT_MAX_ITERATIONS};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PORT: u16 = 7640;
pub const MIN_PORT: u16 = 1024;

/// Workflow used by the comment action unless the config names another.
pub const DOCUMENT_WORKFLOW: &str = "document";

fn default_port() -> u16 {
    DEFAULT_PORT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub drivers: Vec<DriverConfig>,
    #[serde(default)]
    pub tasks: Vec<TaskOverride>,
    #[serde(default)]
    pub workflows: Vec<WorkflowSpec>,
    #[serde(default = "default_port")]
    pub listen_port: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
    /// Directory with `<task>.system.txt` / `<task>.user.txt` prompt files
    /// replacing the shipped prompts. Relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
    /// Append-only chat transcript journal. Relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal_path: Option<PathBuf>,
    /// Workflow run by the comment action; defaults to `document`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment_workflow: Option<String>,
}

/// Changes to a built-in task, or a new task derived from one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskOverride {
    pub id: String,
    /// Built-in task to start from; defaults to `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<InteractionMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<TargetSelector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PromptTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl EngineConfig {
    /// Config with the given drivers and defaults everywhere else.
    pub fn with_drivers(drivers: Vec<DriverConfig>) -> Self {
        Self {
            drivers,
            tasks: Vec::new(),
            workflows: Vec::new(),
            listen_port: DEFAULT_PORT,
            auth_token: None,
            prompts_dir: None,
            journal_path: None,
            comment_workflow: None,
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig = serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            // the position is already part of the error's prefix
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            ConfigError::Parse {
                path: origin.to_owned(),
                line: e.line(),
                column: e.column(),
                message: message.strip_suffix(&suffix).unwrap_or(&message).to_owned(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.drivers.is_empty() {
            return invalid("at least one driver is required".into());
        }
        if self.listen_port < MIN_PORT {
            return invalid(format!(
                "listen_port {} is outside [{MIN_PORT}, 65535]",
                self.listen_port
            ));
        }
        if matches!(&self.auth_token, Some(t) if t.trim().is_empty()) {
            return invalid("auth_token must not be empty when set".into());
        }

        let mut driver_ids = HashSet::new();
        for d in &self.drivers {
            if !driver_ids.insert(&d.id) {
                return invalid(format!("duplicate driver id {}", d.id));
            }
            if let Err(v) = d.validate() {
                return invalid(v.to_string());
            }
        }

        let mut task_ids: HashSet<&str> = BUILTIN_TASKS.iter().copied().collect();
        let mut overridden = HashSet::new();
        for t in &self.tasks {
            if !overridden.insert(t.id.as_str()) {
                return invalid(format!("task {} is configured twice", t.id));
            }
            let base = t.base.as_deref().unwrap_or(&t.id);
            if !BUILTIN_TASKS.contains(&base) && t.template.is_none() {
                return invalid(format!(
                    "task {} is not built in; give it a template or a built-in base",
                    t.id
                ));
            }
            if let Some(base) = &t.base {
                if !BUILTIN_TASKS.contains(&base.as_str()) {
                    return invalid(format!("task {}: unknown base task {base}", t.id));
                }
            }
            if let Some(temp) = t.temperature {
                if !(0.0..=2.0).contains(&temp) {
                    return invalid(format!("task {}: temperature {temp} outside [0, 2]", t.id));
                }
            }
            if let Some(TargetSelector::Explicit(ids)) = &t.targets {
                if let Some(missing) = ids.iter().find(|id| !driver_ids.contains(id)) {
                    return invalid(format!("task {} targets unknown driver {missing}", t.id));
                }
            }
            task_ids.insert(&t.id);
        }

        let mut workflow_ids = HashSet::new();
        for w in &self.workflows {
            if !workflow_ids.insert(w.id.as_str()) {
                return invalid(format!("duplicate workflow id {}", w.id));
            }
            w.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if let Some(missing) = w.task_ids().into_iter().find(|t| !task_ids.contains(t)) {
                return invalid(format!("workflow {} references unknown task {missing}", w.id));
            }
        }
        if let Some(id) = &self.comment_workflow {
            match self.workflows.iter().find(|w| &w.id == id) {
                Some(w) if matches!(w.strategy, Strategy::IterativeRefine { .. }) => {}
                Some(_) => return invalid(format!("comment_workflow {id} must be an iterative_refine workflow")),
                None if id == DOCUMENT_WORKFLOW => {}
                None => return invalid(format!("comment_workflow references unknown workflow {id}")),
            }
        }
        Ok(())
    }

    /// Resolves relative paths against the directory holding the config.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.prompts_dir, &mut self.journal_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Every task the engine knows: built-ins with default targeting plus
    /// configured overrides, in a stable order.
    pub fn task_specs(&self) -> Result<IndexMap<String, TaskSpec>, ConfigError> {
        let mut specs = IndexMap::new();
        for id in BUILTIN_TASKS {
            let spec = match &self.prompts_dir {
                Some(dir) => TaskSpec::builtin_from_dir(id, dir)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?
                    .expect("built-in id"),
                None => TaskSpec::builtin(id).expect("built-in id"),
            };
            specs.insert(id.to_owned(), spec);
        }

        // generation goes to the first configured driver, verification to
        // the last; with one driver both use it
        if let (Some(first), Some(last)) = (self.drivers.first(), self.drivers.last()) {
            retarget(&mut specs, COMMENT_TASK, &first.id);
            retarget(&mut specs, DOC_QUALITY_TASK, &last.id);
        }

        for t in &self.tasks {
            let base = t.base.as_deref().unwrap_or(&t.id);
            let mut spec = match specs.get(base) {
                Some(s) if BUILTIN_TASKS.contains(&base) => s.clone(),
                _ => TaskSpec {
                    id: t.id.clone(),
                    kind: TaskKind::Defined,
                    mode: InteractionMode::ContinueAfterFirst,
                    targets: TargetSelector::Any,
                    template: t.template.clone().ok_or_else(|| {
                        ConfigError::Invalid(format!("task {} needs a template", t.id))
                    })?,
                    temperature: GENERATION_TEMPERATURE,
                    output: OutputFormat::Text,
                },
            };
            spec.id = t.id.clone();
            if let Some(kind) = t.kind {
                spec.kind = kind;
            }
            if let Some(mode) = t.mode {
                spec.mode = mode;
            }
            if let Some(targets) = &t.targets {
                spec.targets = targets.clone();
            }
            if let Some(template) = &t.template {
                spec.template = template.clone();
            }
            if let Some(temperature) = t.temperature {
                spec.temperature = temperature;
            }
            if let Some(output) = t.output {
                spec.output = output;
            }
            specs.insert(t.id.clone(), spec);
        }
        Ok(specs)
    }

    /// Configured workflows plus the default `document` refine workflow.
    pub fn workflow_specs(&self) -> IndexMap<String, WorkflowSpec> {
        let mut workflows = IndexMap::new();
        workflows.insert(
            DOCUMENT_WORKFLOW.to_owned(),
            WorkflowSpec {
                id: DOCUMENT_WORKFLOW.to_owned(),
                strategy: Strategy::IterativeRefine {
                    generator: COMMENT_TASK.to_owned(),
                    verifier: DOC_QUALITY_TASK.to_owned(),
                    max_iterations: DEFAULT_MAX_ITERATIONS,
                },
            },
        );
        for w in &self.workflows {
            workflows.insert(w.id.clone(), w.clone());
        }
        workflows
    }
}

fn retarget(specs: &mut IndexMap<String, TaskSpec>, task: &str, driver: &DriverId) {
    if let Some(spec) = specs.get_mut(task) {
        spec.targets = TargetSelector::one(driver.clone());
    }
}

pub fn load_config(path: &Path) -> Result<EngineConfig, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: origin.clone(),
        reason: e.to_string(),
    })?;
    let mut config = EngineConfig::from_json(&text, &origin)?;
    if let Some(dir) = path.parent() {
        config.resolve_paths(dir);
    }
    // surface prompt-file problems at load time rather than first use
    config.task_specs()?;
    Ok(config)
}
