//! `multimind` command line.
//!
//! Results go to stdout and diagnostics to stderr. Exit codes: 0 success,
//! 1 the task failed or needs manual review, 2 usage or configuration
//! error, 3 driver or network failure.

pub mod backend;
pub mod source;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use multimind_core::driver::{DriverError, DriverId};
use multimind_core::manager::{DriverResult, TargetSelector};
use multimind_core::tasks::{language_for_path, Bindings, CodeSelection, CODE_GENERATION_TASK, DOC_REVIEW_TASK};
use multimind_core::workflow::{WorkflowResult, WorkflowStatus};
use multimind_gateway::engine::failed_on_drivers;
use multimind_gateway::protocol::{
    ApiErrorKind, CommentActionRequest, CredentialState, PostMessageRequest, SelectRequest, TaskRunRequest,
    WorkflowRunRequest,
};
use multimind_gateway::{load_config, EngineConfig, Engine};
use tokio::io::{AsyncBufReadExt, BufReader};

use crate::backend::{Backend, BackendError, Embedded, Remote};

/// Config file looked up in the working directory when neither `--config`
/// nor `MULTIMIND_CONFIG` is given.
pub const DEFAULT_CONFIG_FILE: &str = "multimind.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    TaskFailed = 1,
    Usage = 2,
    Driver = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(Exit::Usage, message)
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        let exit = match &e {
            BackendError::Api(api) if api.kind == ApiErrorKind::Internal => Exit::Driver,
            BackendError::Api(_) => Exit::Usage,
            BackendError::Network(_) | BackendError::Protocol(_) => Exit::Driver,
        };
        Failure::new(exit, e.to_string())
    }
}

type CmdResult = Result<Exit, Failure>;

#[derive(Debug, Parser)]
#[command(name = "multimind", version, about = "Fan requests out to several AI assistants and compare or verify their answers")]
pub struct Cli {
    /// Engine config file [default: ./multimind.json]
    #[arg(long, global = true, env = "MULTIMIND_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Use a running gateway instead of an embedded engine
    #[arg(long, global = true, value_name = "HOST:PORT")]
    pub connect: Option<String>,

    /// Bearer token for --connect; defaults to the config's auth_token
    #[arg(long, global = true, env = "MULTIMIND_TOKEN", hide_env_values = true)]
    pub token: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the gateway on 127.0.0.1
    Serve,
    /// Show registered drivers
    Drivers {
        #[command(subcommand)]
        action: DriversAction,
    },
    /// Generate and verify a documentation comment for a line range
    Comment(CommentArgs),
    /// Generate code from a specification file
    Generate {
        #[arg(long, value_name = "FILE")]
        spec_file: PathBuf,
        #[arg(long)]
        lang: String,
    },
    /// Revise the documentation comment above a line range
    Review {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_name = "A:B")]
        lines: String,
        /// Language id; guessed from the file extension when omitted
        #[arg(long)]
        lang: Option<String>,
        /// Reviewer notes passed to the assistants
        #[arg(long, default_value = "")]
        feedback: String,
    },
    /// Chat with several drivers and pick one answer per turn
    Chat {
        #[arg(long, value_delimiter = ',', value_name = "ID,ID")]
        drivers: Vec<String>,
    },
    /// Run configured workflows
    Workflow {
        #[command(subcommand)]
        action: WorkflowAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum DriversAction {
    List {
        #[arg(long)]
        json: bool,
    },
    /// Request counters, for one driver or all
    Activity {
        id: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct CommentArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long, value_name = "A:B")]
    pub lines: String,
    #[arg(long)]
    pub lang: String,
    /// Insert an accepted comment into the file (previous version kept as FILE.bak)
    #[arg(long)]
    pub apply: bool,
    #[arg(long, value_name = "N")]
    pub max_iter: Option<u32>,
    /// Refine workflow to use instead of the configured default
    #[arg(long)]
    pub workflow: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum WorkflowAction {
    /// Run a workflow and print its result as JSON
    Run {
        id: String,
        /// Input of sequential and parallel workflows
        #[arg(long, value_name = "FILE")]
        input_file: Option<PathBuf>,
        /// Selection for refine workflows
        #[arg(long, requires_all = ["lines", "lang"])]
        file: Option<PathBuf>,
        #[arg(long, value_name = "A:B", requires = "file")]
        lines: Option<String>,
        #[arg(long, requires = "file")]
        lang: Option<String>,
        #[arg(long, value_name = "N")]
        max_iter: Option<u32>,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Usage as i32 } else { Exit::Ok as i32 };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("MULTIMIND_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .try_init();

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return Exit::Driver as i32;
        }
    };
    match runtime.block_on(dispatch(cli)) {
        Ok(exit) => exit as i32,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.exit as i32
        }
    }
}

fn config_path(cli: &Cli) -> Option<PathBuf> {
    cli.config.clone().or_else(|| {
        let local = PathBuf::from(DEFAULT_CONFIG_FILE);
        local.is_file().then_some(local)
    })
}

fn load(cli: &Cli) -> Result<EngineConfig, Failure> {
    let path = config_path(cli).ok_or_else(|| {
        Failure::usage(format!(
            "no config: pass --config, set MULTIMIND_CONFIG or create ./{DEFAULT_CONFIG_FILE}"
        ))
    })?;
    load_config(&path).map_err(|e| Failure::usage(e.to_string()))
}

fn engine(cli: &Cli) -> Result<Arc<Engine>, Failure> {
    Engine::new(load(cli)?)
        .map(Arc::new)
        .map_err(|e| Failure::usage(e.to_string()))
}

fn backend(cli: &Cli) -> Result<Box<dyn Backend>, Failure> {
    match &cli.connect {
        Some(addr) => {
            let token = match &cli.token {
                Some(t) => Some(t.clone()),
                None if config_path(cli).is_some() => load(cli)?.auth_token,
                None => None,
            };
            Ok(Box::new(Remote::new(addr, token)))
        }
        None => Ok(Box::new(Embedded(engine(cli)?))),
    }
}

async fn dispatch(cli: Cli) -> CmdResult {
    if matches!(cli.command, Command::Serve) {
        if cli.connect.is_some() {
            return Err(Failure::usage("serve cannot be combined with --connect"));
        }
        return serve(engine(&cli)?).await;
    }
    let backend = backend(&cli)?;
    let backend = backend.as_ref();
    match cli.command {
        Command::Serve => unreachable!(),
        Command::Drivers { action } => drivers(backend, action).await,
        Command::Comment(args) => comment(backend, args).await,
        Command::Generate { spec_file, lang } => generate(backend, &spec_file, &lang).await,
        Command::Review {
            file,
            lines,
            lang,
            feedback,
        } => review(backend, &file, &lines, lang, &feedback).await,
        Command::Chat { drivers } => chat(backend, drivers).await,
        Command::Workflow {
            action:
                WorkflowAction::Run {
                    id,
                    input_file,
                    file,
                    lines,
                    lang,
                    max_iter,
                },
        } => {
            let selection = match (file, lines, lang) {
                (Some(f), Some(l), Some(lang)) => Some(read_selection(&f, &l, &lang)?.0),
                _ => None,
            };
            let input = input_file.as_deref().map(read_file).transpose()?;
            workflow_run(backend, &id, input, selection, max_iter).await
        }
    }
}

async fn serve(engine: Arc<Engine>) -> CmdResult {
    let port = engine.config().listen_port;
    eprintln!("multimind gateway on http://127.0.0.1:{port}");
    tokio::select! {
        r = multimind_gateway::api::serve(engine) => {
            r.map_err(|e| Failure::new(Exit::Driver, format!("cannot serve on port {port}: {e}")))?;
            Ok(Exit::Ok)
        }
        _ = tokio::signal::ctrl_c() => Ok(Exit::Ok),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn read_selection(file: &Path, lines: &str, lang: &str) -> Result<(CodeSelection, String), Failure> {
    let (a, b) = source::parse_lines(lines).map_err(Failure::usage)?;
    let content = read_file(file)?;
    let selection = CodeSelection::from_content(file, lang, a, b, &content)
        .map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
    Ok((selection, content))
}

/// Exit code for a run that produced no usable answer.
fn failure_exit(errors: &[DriverError]) -> Exit {
    if failed_on_drivers(errors) {
        Exit::Driver
    } else {
        Exit::TaskFailed
    }
}

fn report_errors(errors: &[DriverError]) {
    for e in errors {
        eprintln!("  {}: {} ({})", e.driver_id, e.message, e.kind);
    }
}

fn print_out(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
    let _ = out.flush();
}

async fn drivers(backend: &dyn Backend, action: DriversAction) -> CmdResult {
    let views = backend.drivers().await?;
    match action {
        DriversAction::List { json: true } => print_out(&pretty(&views)),
        DriversAction::List { json: false } => {
            for v in &views {
                let credential = match v.credential {
                    CredentialState::None => "-",
                    CredentialState::Set => "credential set",
                    CredentialState::Missing => "credential MISSING",
                };
                let model = if v.config.model.is_empty() { "-" } else { &v.config.model };
                print_out(&format!("{}\t{}\t{}\t{}", v.config.id, v.config.provider, model, credential));
            }
        }
        DriversAction::Activity { id, json } => {
            let ids: Vec<String> = match id {
                Some(id) => vec![id],
                None => views.iter().map(|v| v.config.id.to_string()).collect(),
            };
            let mut rows = serde_json::Map::new();
            for id in ids {
                let a = backend.activity(&id).await?;
                if json {
                    rows.insert(id, serde_json::to_value(a).unwrap_or_default());
                } else {
                    print_out(&format!(
                        "{id}\trequests={} successes={} errors={} latency_ms={}",
                        a.requests, a.successes, a.errors, a.cumulative_latency_ms
                    ));
                }
            }
            if json {
                print_out(&pretty(&rows));
            }
        }
    }
    Ok(Exit::Ok)
}

fn pretty(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).unwrap_or_default()
}

async fn comment(backend: &dyn Backend, args: CommentArgs) -> CmdResult {
    let (selection, content) = read_selection(&args.file, &args.lines, &args.lang)?;
    let start = selection.start_line;
    let result = backend
        .comment(CommentActionRequest {
            selection,
            workflow: args.workflow,
            apply: args.apply,
            file_content: Some(content.clone()),
            max_iterations: args.max_iter,
        })
        .await?;

    match result.status {
        WorkflowStatus::Accepted => {
            if let Some(c) = &result.comment {
                print_out(c);
            }
            if args.apply {
                let annotated = result
                    .annotated_file
                    .as_deref()
                    .ok_or_else(|| Failure::new(Exit::Driver, "gateway returned no annotated file"))?;
                let backup = source::rewrite_with_backup(&args.file, &content, annotated)
                    .map_err(|m| Failure::new(Exit::TaskFailed, m))?;
                eprintln!(
                    "inserted comment above line {start} of {} (previous version in {})",
                    args.file.display(),
                    backup.display()
                );
            }
            Ok(Exit::Ok)
        }
        WorkflowStatus::NeedsManualReview => {
            if let Some(c) = &result.comment {
                print_out(c);
            }
            eprintln!(
                "needs manual review: no comment accepted after {} iteration(s); {} left unchanged",
                result.iterations,
                args.file.display()
            );
            if let Some(f) = &result.feedback {
                eprintln!("last feedback: {f}");
            }
            Ok(Exit::TaskFailed)
        }
        WorkflowStatus::Failed => {
            eprintln!("comment failed after {} iteration(s)", result.iterations);
            report_errors(&result.errors);
            Ok(failure_exit(&result.errors))
        }
    }
}

async fn run_text_task(backend: &dyn Backend, task: &str, bindings: Bindings) -> CmdResult {
    let response = backend
        .run_task(
            task,
            TaskRunRequest {
                bindings,
                ..Default::default()
            },
        )
        .await?;
    match response.result.output() {
        Some(text) if response.result.is_ok() => {
            print_out(text);
            Ok(Exit::Ok)
        }
        _ => {
            let errors = response.result.driver_errors();
            eprintln!(
                "{task} failed: {}",
                response.result.failure.as_deref().unwrap_or("no usable response")
            );
            report_errors(&errors);
            Ok(failure_exit(&errors))
        }
    }
}

fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v.to_owned())).collect()
}

async fn generate(backend: &dyn Backend, spec_file: &Path, lang: &str) -> CmdResult {
    let spec = read_file(spec_file)?;
    if spec.trim().is_empty() {
        return Err(Failure::usage(format!("{} is empty", spec_file.display())));
    }
    run_text_task(backend, CODE_GENERATION_TASK, bindings([("lang", lang), ("spec", &spec)])).await
}

async fn review(backend: &dyn Backend, file: &Path, lines: &str, lang: Option<String>, feedback: &str) -> CmdResult {
    let lang = match lang.or_else(|| language_for_path(file).map(str::to_owned)) {
        Some(l) => l,
        None => return Err(Failure::usage(format!("cannot tell the language of {}; pass --lang", file.display()))),
    };
    let (selection, content) = read_selection(file, lines, &lang)?;
    let current = source::comment_above(&content, selection.start_line).ok_or_else(|| {
        Failure::usage(format!(
            "no documentation comment directly above line {} of {}",
            selection.start_line,
            file.display()
        ))
    })?;
    run_text_task(
        backend,
        DOC_REVIEW_TASK,
        bindings([
            ("lang", &lang),
            ("code", &selection.text),
            ("current_doc", &current),
            ("feedback", feedback),
        ]),
    )
    .await
}

async fn workflow_run(
    backend: &dyn Backend,
    id: &str,
    input: Option<String>,
    selection: Option<CodeSelection>,
    max_iter: Option<u32>,
) -> CmdResult {
    let result: WorkflowResult = backend
        .run_workflow(
            id,
            WorkflowRunRequest {
                input,
                selection,
                bindings: Bindings::default(),
                max_iterations: max_iter,
            },
        )
        .await?;
    print_out(&pretty(&result));
    Ok(match result.status {
        WorkflowStatus::Accepted => Exit::Ok,
        WorkflowStatus::NeedsManualReview => {
            eprintln!("needs manual review");
            Exit::TaskFailed
        }
        WorkflowStatus::Failed => failure_exit(&result.driver_errors()),
    })
}

enum Pick {
    Candidate(usize),
    Skip,
    Quit,
}

async fn chat(backend: &dyn Backend, drivers: Vec<String>) -> CmdResult {
    let targets = if drivers.is_empty() {
        None
    } else {
        let ids = drivers
            .iter()
            .map(|d| DriverId::new(d.trim()).map_err(|e| Failure::usage(format!("--drivers: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Some(TargetSelector::Explicit(ids))
    };
    let session = backend.create_session().await?.session_id;
    let mut input = BufReader::new(tokio::io::stdin()).lines();
    eprintln!("chat session {session}; /quit to leave");

    loop {
        eprint!("you> ");
        let Some(line) = input.next_line().await.map_err(|e| Failure::usage(e.to_string()))? else {
            return Ok(Exit::Ok);
        };
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "/quit" {
            return Ok(Exit::Ok);
        }
        let turn = match backend
            .post_message(
                &session,
                PostMessageRequest {
                    text: text.to_owned(),
                    targets: targets.clone(),
                },
            )
            .await
        {
            Ok(t) => t,
            Err(e @ BackendError::Api(_)) => {
                eprintln!("error: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };

        let candidates: Vec<(&DriverId, &DriverResult)> = turn.turn.candidates.results.iter().collect();
        for (n, (id, result)) in candidates.iter().enumerate() {
            match result {
                DriverResult::Ok { response } => {
                    print_out(&format!("[{}] {id}:\n{}", n + 1, indent(&response.content)));
                }
                DriverResult::Error { error } => {
                    print_out(&format!("[{}] {id}: error ({}): {}", n + 1, error.kind, error.message));
                }
            }
        }
        if candidates.iter().all(|(_, r)| r.response().is_none()) {
            eprintln!("no driver answered; nothing to pick");
            continue;
        }

        let pick = loop {
            eprint!("pick 1-{} (enter to skip)> ", candidates.len());
            let Some(line) = input.next_line().await.map_err(|e| Failure::usage(e.to_string()))? else {
                break Pick::Quit;
            };
            match line.trim() {
                "" => break Pick::Skip,
                "/quit" => break Pick::Quit,
                s => match s.parse::<usize>() {
                    Ok(n) if (1..=candidates.len()).contains(&n) && candidates[n - 1].1.response().is_some() => {
                        break Pick::Candidate(n - 1)
                    }
                    _ => eprintln!("pick the number of an answered candidate"),
                },
            }
        };
        match pick {
            Pick::Quit => return Ok(Exit::Ok),
            Pick::Skip => {}
            Pick::Candidate(n) => {
                backend
                    .select(
                        &session,
                        SelectRequest {
                            turn_index: turn.turn_index,
                            driver_id: candidates[n].0.clone(),
                        },
                    )
                    .await?;
            }
        }
    }
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("    {l}")).collect::<Vec<_>>().join("\n")
}
