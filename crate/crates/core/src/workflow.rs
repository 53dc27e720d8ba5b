//! Task managers: strategies that coordinate several tasks.
//!
//! * sequential: each step's output becomes the next step's `{{input}}`;
//!   the first failure stops the run.
//! * parallel: every step gets the same `{{input}}` and runs concurrently;
//!   results are aggregated, not ranked.
//! * iterative refine: generate, verify, and regenerate with the verifier's
//!   feedback bound to `{{feedback}}` until a passing verdict or the
//!   iteration budget runs out.

use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::driver::DriverError;
use crate::tasks::{
    parse_verdict, Bindings, CodeSelection, TaskError, TaskResult, TaskRunner, TaskSpec, Verdict,
};

pub const DEFAULT_MAX_ITERATIONS: u32 = 3;

/// Binding that carries a step's input in sequential and parallel runs.
pub const INPUT_BINDING: &str = "input";

fn default_max_iterations() -> u32 {
    DEFAULT_MAX_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    Sequential {
        steps: Vec<String>,
    },
    Parallel {
        steps: Vec<String>,
    },
    IterativeRefine {
        generator: String,
        verifier: String,
        #[serde(default = "default_max_iterations")]
        max_iterations: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub id: String,
    #[serde(flatten)]
    pub strategy: Strategy,
}

impl WorkflowSpec {
    /// Task ids the workflow refers to, in order.
    pub fn task_ids(&self) -> Vec<&str> {
        match &self.strategy {
            Strategy::Sequential { steps } | Strategy::Parallel { steps } => {
                steps.iter().map(String::as_str).collect()
            }
            Strategy::IterativeRefine {
                generator, verifier, ..
            } => vec![generator, verifier],
        }
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        let invalid = |why: &str| Err(WorkflowError::InvalidSpec(format!("workflow {}: {why}", self.id)));
        match &self.strategy {
            Strategy::Sequential { steps } | Strategy::Parallel { steps } if steps.is_empty() => {
                invalid("needs at least one step")
            }
            Strategy::IterativeRefine {
                generator, verifier, ..
            } if generator == verifier => invalid("generator and verifier must be different tasks"),
            Strategy::IterativeRefine { max_iterations: 0, .. } => invalid("max_iterations must be at least 1"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkflowError {
    #[error("{0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Task(#[from] TaskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowStatus {
    Accepted,
    NeedsManualReview,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Task { result: TaskResult },
    Verdict { verdict: Verdict },
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        errors: Vec<DriverError>,
    },
}

impl TraceRecord {
    fn from_task_error(error: TaskError) -> Self {
        let errors = match &error {
            TaskError::NoResponse { errors, .. } => errors.clone(),
            _ => Vec::new(),
        };
        TraceRecord::Error {
            message: error.to_string(),
            errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Position in the trace, strictly increasing from 0.
    pub seq: usize,
    /// Step number (sequential, parallel) or loop round (refine), from 1.
    pub iteration: u32,
    pub task_id: String,
    pub record: TraceRecord,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowResult {
    pub status: WorkflowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_output: Option<String>,
    /// Last verifier feedback, for refine runs that did not pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    /// Per-step outputs of a parallel run, in step order.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub outputs: IndexMap<String, String>,
    pub iterations: u32,
    pub trace: Vec<TraceEntry>,
}

impl WorkflowResult {
    fn new() -> Self {
        Self {
            status: WorkflowStatus::Failed,
            final_output: None,
            feedback: None,
            outputs: IndexMap::new(),
            iterations: 0,
            trace: Vec::new(),
        }
    }

    fn push(&mut self, iteration: u32, task_id: &str, record: TraceRecord, started: Instant) {
        self.trace.push(TraceEntry {
            seq: self.trace.len(),
            iteration,
            task_id: task_id.to_owned(),
            record,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }

    /// Driver errors recorded anywhere in the trace.
    pub fn driver_errors(&self) -> Vec<DriverError> {
        self.trace
            .iter()
            .flat_map(|e| match &e.record {
                TraceRecord::Task { result } => result.driver_errors(),
                TraceRecord::Error { errors, .. } => errors.clone(),
                TraceRecord::Verdict { .. } => Vec::new(),
            })
            .collect()
    }
}

#[derive(Clone)]
pub struct TaskManager {
    runner: TaskRunner,
}

impl TaskManager {
    pub fn new(runner: TaskRunner) -> Self {
        Self { runner }
    }

    pub fn runner(&self) -> &TaskRunner {
        &self.runner
    }

    pub async fn run_sequential(&self, steps: &[TaskSpec], initial_input: &str) -> Result<WorkflowResult, WorkflowError> {
        self.run_sequential_with(steps, initial_input, &Bindings::new()).await
    }

    /// Sequential run with extra bindings available to every step.
    pub async fn run_sequential_with(
        &self,
        steps: &[TaskSpec],
        initial_input: &str,
        base: &Bindings,
    ) -> Result<WorkflowResult, WorkflowError> {
        if steps.is_empty() {
            return Err(WorkflowError::InvalidSpec("sequential workflow needs at least one step".into()));
        }
        let mut result = WorkflowResult::new();
        let mut input = initial_input.to_owned();
        for (index, step) in steps.iter().enumerate() {
            let iteration = index as u32 + 1;
            result.iterations = iteration;
            let started = Instant::now();
            let mut bindings = base.clone();
            bindings.insert(INPUT_BINDING.to_owned(), input.clone());
            match self.runner.run(step, &bindings, &[]).await {
                Ok(task) => {
                    let output = task.output().map(str::to_owned);
                    result.push(iteration, &step.id, TraceRecord::Task { result: task }, started);
                    match output {
                        Some(output) => input = output,
                        None => return Ok(result),
                    }
                }
                Err(e) => {
                    result.push(iteration, &step.id, TraceRecord::from_task_error(e), started);
                    return Ok(result);
                }
            }
        }
        result.status = WorkflowStatus::Accepted;
        result.final_output = Some(input);
        Ok(result)
    }

    pub async fn run_parallel(&self, steps: &[TaskSpec], shared_input: &str) -> Result<WorkflowResult, WorkflowError> {
        self.run_parallel_with(steps, shared_input, &Bindings::new()).await
    }

    pub async fn run_parallel_with(
        &self,
        steps: &[TaskSpec],
        shared_input: &str,
        base: &Bindings,
    ) -> Result<WorkflowResult, WorkflowError> {
        if steps.is_empty() {
            return Err(WorkflowError::InvalidSpec("parallel workflow needs at least one step".into()));
        }
        let mut bindings = base.clone();
        bindings.insert(INPUT_BINDING.to_owned(), shared_input.to_owned());
        let bindings = &bindings;

        let runs = steps.iter().map(|step| async move {
            let started = Instant::now();
            let outcome = self.runner.run(step, bindings, &[]).await;
            (started, outcome)
        });
        let finished = futures::future::join_all(runs).await;

        let mut result = WorkflowResult::new();
        result.iterations = steps.len() as u32;
        for (index, (step, (started, outcome))) in steps.iter().zip(finished).enumerate() {
            let iteration = index as u32 + 1;
            let record = match outcome {
                Ok(task) => {
                    if let Some(output) = task.output() {
                        result.outputs.insert(step.id.clone(), output.to_owned());
                    }
                    TraceRecord::Task { result: task }
                }
                Err(e) => TraceRecord::from_task_error(e),
            };
            result.push(iteration, &step.id, record, started);
        }
        if !result.outputs.is_empty() {
            result.status = WorkflowStatus::Accepted;
            result.final_output = Some(result.outputs.values().cloned().collect::<Vec<_>>().join("\n\n"));
        }
        Ok(result)
    }

    pub async fn run_iterative_refine(
        &self,
        generator: &TaskSpec,
        verifier: &TaskSpec,
        input: &CodeSelection,
        max_iterations: u32,
    ) -> Result<WorkflowResult, WorkflowError> {
        self.run_iterative_refine_with(generator, verifier, input, max_iterations, &Bindings::new())
            .await
    }

    /// Refine loop with extra bindings for the generator (for example
    /// `current_doc` when the generator is a documentation review).
    pub async fn run_iterative_refine_with(
        &self,
        generator: &TaskSpec,
        verifier: &TaskSpec,
        input: &CodeSelection,
        max_iterations: u32,
        extra: &Bindings,
    ) -> Result<WorkflowResult, WorkflowError> {
        if max_iterations == 0 {
            return Err(WorkflowError::InvalidSpec("max_iterations must be at least 1".into()));
        }
        if generator.id == verifier.id {
            return Err(WorkflowError::InvalidSpec("generator and verifier must be different tasks".into()));
        }
        input.validate().map_err(TaskError::from)?;

        let mut result = WorkflowResult::new();
        let mut feedback = String::new();
        let mut last_comment = None;

        for iteration in 1..=max_iterations {
            result.iterations = iteration;

            let started = Instant::now();
            let mut bindings = extra.clone();
            bindings.insert("lang".into(), input.language_id.clone());
            bindings.insert("code".into(), input.text.clone());
            bindings.insert("feedback".into(), feedback.clone());
            let generated = match self.runner.run(generator, &bindings, &[]).await {
                Ok(task) => task,
                Err(e) => {
                    result.push(iteration, &generator.id, TraceRecord::from_task_error(e), started);
                    return Ok(result);
                }
            };
            let comment = generated.output().map(str::to_owned);
            result.push(iteration, &generator.id, TraceRecord::Task { result: generated }, started);
            let Some(comment) = comment else {
                return Ok(result);
            };

            let started = Instant::now();
            let mut bindings = extra.clone();
            bindings.insert("lang".into(), input.language_id.clone());
            bindings.insert("code".into(), input.text.clone());
            bindings.insert("comment".into(), comment.clone());
            let verdict = match self.runner.run(verifier, &bindings, &[]).await {
                Ok(task) => match task.output() {
                    Some(raw) => parse_verdict(raw),
                    None => {
                        result.push(iteration, &verifier.id, TraceRecord::Task { result: task }, started);
                        return Ok(result);
                    }
                },
                Err(e) => {
                    result.push(iteration, &verifier.id, TraceRecord::from_task_error(e), started);
                    return Ok(result);
                }
            };
            let pass = verdict.pass;
            feedback = verdict.feedback.clone();
            result.push(iteration, &verifier.id, TraceRecord::Verdict { verdict }, started);
            last_comment = Some(comment);

            if pass {
                result.status = WorkflowStatus::Accepted;
                result.final_output = last_comment;
                return Ok(result);
            }
        }

        result.status = WorkflowStatus::NeedsManualReview;
        result.final_output = last_comment;
        result.feedback = Some(feedback);
        Ok(result)
    }
}
