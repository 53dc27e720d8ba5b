#![allow(dead_code)]

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;

use serde_json::{json, Value};

pub const TOKEN: &str = "cli-suite-token";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Embedded,
    Connected,
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn replies(id: &str, texts: &[&str]) -> Value {
    let steps: Vec<Value> = texts.iter().map(|t| json!({ "reply": t })).collect();
    json!({ "id": id, "provider": "scripted", "script": { "steps": steps } })
}

pub fn failing(id: &str, kind: &str) -> Value {
    json!({ "id": id, "provider": "scripted", "script": { "steps": [{ "error": kind }] } })
}

/// Config with a `writer` generator and a `critic` verifier plus any extra
/// drivers.
pub fn comment_config(comments: &[&str], verdicts: &[&str]) -> Value {
    json!({
        "auth_token": TOKEN,
        "drivers": [replies("writer", comments), replies("critic", verdicts)],
        "tasks": [
            { "id": "comment", "targets": ["writer"] },
            { "id": "doc_quality", "targets": ["critic"] }
        ]
    })
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// A scratch directory with a config file, and for [`Mode::Connected`] a
/// gateway serving that config.
pub struct Harness {
    pub mode: Mode,
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
    addr: Option<SocketAddr>,
}

impl Harness {
    pub fn new(mode: Mode, config: Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("multimind.json");
        std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        let addr = (mode == Mode::Connected).then(|| start_gateway(&path));
        Self {
            mode,
            dir,
            config: path,
            addr,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Copies a fixture into the scratch directory.
    pub fn copy(&self, fixture_name: &str) -> PathBuf {
        let to = self.path(fixture_name);
        std::fs::copy(fixture(fixture_name), &to).unwrap();
        to
    }

    pub fn command(&self) -> Command {
        let mut cmd = bare_command();
        cmd.current_dir(self.dir.path());
        match self.addr {
            None => {
                cmd.arg("--config").arg(&self.config);
            }
            Some(addr) => {
                cmd.args(["--connect", &addr.to_string(), "--token", TOKEN]);
            }
        }
        cmd
    }

    pub fn run(&self, args: &[&str]) -> Output {
        run_command(self.command().args(args), "")
    }

    pub fn run_with_input(&self, args: &[&str], stdin: &str) -> Output {
        run_command(self.command().args(args), stdin)
    }
}

/// The binary with no config-related environment inherited.
pub fn bare_command() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_multimind"));
    cmd.env_remove("MULTIMIND_CONFIG")
        .env_remove("MULTIMIND_TOKEN")
        .env_remove("MULTIMIND_LOG")
        .env("RUST_BACKTRACE", "0");
    cmd
}

pub fn run_command(cmd: &mut Command, stdin: &str) -> Output {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn start_gateway(config: &Path) -> SocketAddr {
    let engine = multimind_gateway::Engine::new(multimind_gateway::load_config(config).unwrap()).unwrap();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            multimind_gateway::api::serve_on(listener, Arc::new(engine)).await.unwrap();
        });
    });
    addr
}
