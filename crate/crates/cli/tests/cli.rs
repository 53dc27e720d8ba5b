//! Every scenario runs twice: against an embedded engine and through
//! `--connect` to a gateway serving the same config.

mod support;

use multimind_core::workflow::WorkflowResult;
use serde_json::{json, Value};
use support::{bare_command, comment_config, failing, fixture, replies, run_command, Harness, Mode};

const ADD_COMMENT: &str = "/**\n * Adds two integers.\n *\n * @param a the first operand\n * @param b the second operand\n * @return the sum of a and b\n */";

fn read(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn comment_apply_writes_golden_file_and_backup(mode: Mode) {
    let h = Harness::new(mode, comment_config(&[ADD_COMMENT], &["VERDICT: PASS\nAccurate."]));
    let file = h.copy("Calc.java");
    let out = h.run(&["comment", "--file", "Calc.java", "--lines", "15:17", "--lang", "java", "--apply"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout, format!("{ADD_COMMENT}\n"));
    assert_eq!(read(&file), read(&fixture("Calc.commented.java")));
    assert_eq!(read(&h.path("Calc.java.bak")), read(&fixture("Calc.java")));
}

fn comment_all_fail_leaves_file_untouched(mode: Mode) {
    let h = Harness::new(mode, comment_config(&["/** a */", "/** b */", "/** c */"], &["VERDICT: FAIL\nToo vague."]));
    let file = h.copy("Calc.java");
    let out = h.run(&["comment", "--file", "Calc.java", "--lines", "15:17", "--lang", "java", "--apply"]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("needs manual review"), "{}", out.stderr);
    assert!(out.stderr.contains("Too vague."));
    assert_eq!(read(&file), read(&fixture("Calc.java")));
    assert!(!h.path("Calc.java.bak").exists());
}

fn comment_without_apply_only_prints(mode: Mode) {
    let h = Harness::new(mode, comment_config(&["/** Negates. */"], &["verdict: pass"]));
    let file = h.copy("Calc.java");
    let out = h.run(&["comment", "--file", "Calc.java", "--lines", "27:29", "--lang", "java", "--max-iter", "1"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout, "/** Negates. */\n");
    assert_eq!(read(&file), read(&fixture("Calc.java")));
}

fn comment_bad_range_is_usage_error(mode: Mode) {
    let h = Harness::new(mode, comment_config(&["/** x */"], &["VERDICT: PASS"]));
    let file = h.copy("Calc.java");
    for lines in ["29:40", "9:3", "x"] {
        let out = h.run(&["comment", "--file", "Calc.java", "--lines", lines, "--lang", "java", "--apply"]);
        assert_eq!(out.code, 2, "{lines}: {}", out.stderr);
        assert!(out.stdout.is_empty());
    }
    assert_eq!(read(&file), read(&fixture("Calc.java")));
}

fn comment_driver_failure_exits_3(mode: Mode) {
    let config = json!({
        "auth_token": support::TOKEN,
        "drivers": [failing("writer", "auth"), replies("critic", &["VERDICT: PASS"])],
        "tasks": [{ "id": "comment", "targets": ["writer"] }, { "id": "doc_quality", "targets": ["critic"] }]
    });
    let h = Harness::new(mode, config);
    h.copy("Calc.java");
    let out = h.run(&["comment", "--file", "Calc.java", "--lines", "15:17", "--lang", "java", "--apply"]);
    assert_eq!(out.code, 3, "{}", out.stderr);
    assert!(out.stderr.contains("writer"));
    assert_eq!(read(&h.path("Calc.java")), read(&fixture("Calc.java")));
}

fn missing_lang_is_usage_error(mode: Mode) {
    let h = Harness::new(mode, comment_config(&["/** x */"], &["VERDICT: PASS"]));
    h.copy("Calc.java");
    let out = h.run(&["comment", "--file", "Calc.java", "--lines", "15:17"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("Usage:"), "{}", out.stderr);
}

fn generate_prints_extracted_code(mode: Mode) {
    let config = json!({
        "auth_token": support::TOKEN,
        "drivers": [replies("coder", &["Here you go:\n```java\nint zero() { return 0; }\n```\n"])]
    });
    let h = Harness::new(mode, config);
    std::fs::write(h.path("spec.txt"), "A method returning zero.").unwrap();
    let out = h.run(&["generate", "--spec-file", "spec.txt", "--lang", "java"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout.trim_end(), "int zero() { return 0; }");
}

fn review_uses_comment_above_selection(mode: Mode) {
    let config = json!({
        "auth_token": support::TOKEN,
        "drivers": [replies("reviewer", &["/** Returns a + b. */"])]
    });
    let h = Harness::new(mode, config);
    h.copy("Calc.commented.java");
    h.copy("Calc.java");
    let out = h.run(&["review", "--file", "Calc.commented.java", "--lines", "22:24"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout, "/** Returns a + b. */\n");

    let out = h.run(&["review", "--file", "Calc.java", "--lines", "15:17"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("no documentation comment"));
}

fn chat_loop_prints_candidates_and_picks(mode: Mode) {
    let config = json!({
        "auth_token": support::TOKEN,
        "drivers": [
            replies("alpha", &["alpha-1", "alpha-2"]),
            { "id": "beta", "provider": "scripted", "script": { "steps": [{ "reply": "beta-1" }, { "error": "network" }] } }
        ]
    });
    let h = Harness::new(mode, config);
    let out = h.run_with_input(&["chat", "--drivers", "alpha,beta"], "hello\n2\nagain\n2\n1\n/quit\n");
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("[1] alpha:\n    alpha-1\n[2] beta:\n    beta-1\n"), "{}", out.stdout);
    assert!(out.stdout.contains("[1] alpha:\n    alpha-2\n[2] beta: error (network)"), "{}", out.stdout);
    // picking the errored candidate is refused and asked again
    assert!(out.stderr.contains("pick the number of an answered candidate"));
}

fn chat_unknown_driver_is_reported(mode: Mode) {
    let h = Harness::new(mode, json!({ "auth_token": support::TOKEN, "drivers": [replies("alpha", &["a"])] }));
    let out = h.run_with_input(&["chat", "--drivers", "ghost"], "hi\n/quit\n");
    assert_eq!(out.code, 0);
    assert!(out.stderr.contains("ghost"), "{}", out.stderr);
    assert!(out.stdout.is_empty());
}

fn workflow_run_prints_round_trippable_json(mode: Mode) {
    let config = json!({
        "auth_token": support::TOKEN,
        "drivers": [replies("drafter", &["draft text"]), replies("polisher", &["polished text"])],
        "tasks": [
            { "id": "draft", "template": { "user": "Draft: {{input}}" }, "targets": ["drafter"] },
            { "id": "polish", "template": { "user": "Polish: {{input}}" }, "targets": ["polisher"] }
        ],
        "workflows": [{ "id": "pipeline", "strategy": "sequential", "steps": ["draft", "polish"] }]
    });
    let h = Harness::new(mode, config);
    std::fs::write(h.path("in.txt"), "notes").unwrap();
    let out = h.run(&["workflow", "run", "pipeline", "--input-file", "in.txt"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let value: Value = serde_json::from_str(&out.stdout).unwrap();
    let parsed: WorkflowResult = serde_json::from_value(value.clone()).unwrap();
    assert_eq!(serde_json::to_value(&parsed).unwrap(), value);
    assert_eq!(parsed.final_output.as_deref(), Some("polished text"));
    assert_eq!(parsed.trace.len(), 2);

    let out = h.run(&["workflow", "run", "nope", "--input-file", "in.txt"]);
    assert_eq!(out.code, 2);
}

fn workflow_run_refine_needs_review_exits_1(mode: Mode) {
    let h = Harness::new(mode, comment_config(&["/** a */"], &["VERDICT: FAIL\nNo."]));
    h.copy("Calc.java");
    let out = h.run(&[
        "workflow", "run", "document", "--file", "Calc.java", "--lines", "15:17", "--lang", "java", "--max-iter", "2",
    ]);
    assert_eq!(out.code, 1, "{}", out.stderr);
    let parsed: WorkflowResult = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(parsed.iterations, 2);
}

fn drivers_list_never_shows_credentials(mode: Mode) {
    let var = match mode {
        Mode::Embedded => "MM_CLI_SUITE_KEY_E",
        Mode::Connected => "MM_CLI_SUITE_KEY_C",
    };
    let secret = "sk-cli-suite-SENTINEL-77";
    std::env::set_var(var, secret);
    let config = json!({
        "auth_token": support::TOKEN,
        "drivers": [
            replies("local", &["x"]),
            { "id": "remote", "provider": "openai-compatible", "endpoint": "http://127.0.0.1:9/v1",
              "model": "gpt-4o-mini", "credential_env": var }
        ]
    });
    let h = Harness::new(mode, config);
    for args in [&["drivers", "list"][..], &["drivers", "list", "--json"], &["drivers", "activity", "--json"]] {
        let out = h.run(args);
        assert_eq!(out.code, 0, "{}", out.stderr);
        assert!(!out.stdout.contains(secret) && !out.stderr.contains(secret));
    }
    let out = h.run(&["drivers", "list"]);
    assert!(out.stdout.contains("remote\topenai-compatible\tgpt-4o-mini\tcredential set"), "{}", out.stdout);
    let out = h.run(&["drivers", "activity", "local"]);
    assert_eq!(out.stdout, "local\trequests=0 successes=0 errors=0 latency_ms=0\n");
    assert_eq!(h.run(&["drivers", "activity", "ghost"]).code, 2);
}

macro_rules! both_modes {
    ($($name:ident),* $(,)?) => {
        mod embedded {
            $( #[test] fn $name() { super::$name(super::Mode::Embedded) } )*
        }
        mod connected {
            $( #[test] fn $name() { super::$name(super::Mode::Connected) } )*
        }
    };
}

both_modes!(
    comment_apply_writes_golden_file_and_backup,
    comment_all_fail_leaves_file_untouched,
    comment_without_apply_only_prints,
    comment_bad_range_is_usage_error,
    comment_driver_failure_exits_3,
    missing_lang_is_usage_error,
    generate_prints_extracted_code,
    review_uses_comment_above_selection,
    chat_loop_prints_candidates_and_picks,
    chat_unknown_driver_is_reported,
    workflow_run_prints_round_trippable_json,
    workflow_run_refine_needs_review_exits_1,
    drivers_list_never_shows_credentials,
);

#[test]
fn config_discovery_order() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, driver: &str| {
        let path = dir.path().join(name);
        let config = json!({ "drivers": [replies(driver, &["x"])] });
        std::fs::write(&path, config.to_string()).unwrap();
        path
    };
    let local = write("multimind.json", "from-cwd");
    let env = write("env.json", "from-env");
    let flag = write("flag.json", "from-flag");

    let list = |cmd: &mut std::process::Command| run_command(cmd.current_dir(dir.path()).args(["drivers", "list"]), "");
    assert!(list(&mut bare_command()).stdout.starts_with("from-cwd\t"));
    assert!(list(bare_command().env("MULTIMIND_CONFIG", &env)).stdout.starts_with("from-env\t"));
    let out = list(bare_command().env("MULTIMIND_CONFIG", &env).arg("--config").arg(&flag));
    assert!(out.stdout.starts_with("from-flag\t"));

    std::fs::remove_file(local).unwrap();
    let out = list(&mut bare_command());
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("no config"));
}

#[test]
fn invalid_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"drivers\": [\n    {\"id\": }\n  ]\n}").unwrap();
    let out = run_command(bare_command().arg("--config").arg(&path).args(["drivers", "list"]), "");
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("bad.json:3:"), "{}", out.stderr);
}

#[test]
fn unreachable_gateway_exits_3() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = run_command(bare_command().args(["--connect", &format!("127.0.0.1:{port}"), "drivers", "list"]), "");
    assert_eq!(out.code, 3, "{}", out.stderr);
    assert!(out.stderr.contains("cannot reach gateway"));
}

#[test]
fn wrong_token_is_usage_error() {
    let h = Harness::new(Mode::Connected, comment_config(&["x"], &["VERDICT: PASS"]));
    let addr = h.command().get_args().nth(1).unwrap().to_string_lossy().into_owned();
    let out = run_command(bare_command().args(["--connect", &addr, "--token", "wrong", "drivers", "list"]), "");
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("bearer token"), "{}", out.stderr);
}

#[test]
fn example_config_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../multimind.example.json");
    let config = multimind_gateway::load_config(&path).unwrap();
    assert!(config.workflow_specs().contains_key("careful-doc"));
    let out = run_command(bare_command().arg("--config").arg(&path).args(["drivers", "list"]), "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout.lines().count(), 3);
}
