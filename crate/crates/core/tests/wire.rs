use std::collections::VecDeque;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode, Uri};
use axum::Router;
use multimind_core::driver::wire::check_request_body;
use multimind_core::driver::{
    format_request, parse_response, AssistantRequest, Driver, DriverConfig, DriverId, ErrorKind,
    FinishReason, HttpDriver, Message, ProviderKind,
};
use url::Url;

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/wire").join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn config(provider: ProviderKind, endpoint: &str, model: &str, env: &str) -> DriverConfig {
    let mut c = DriverConfig::network(
        DriverId::new("remote").unwrap(),
        provider,
        Url::parse(endpoint).unwrap(),
        model,
        Some(env.to_owned()),
    );
    c.max_output_tokens = 256;
    c
}

fn golden_request() -> AssistantRequest {
    AssistantRequest::new(vec![
        Message::system("You write concise Javadoc."),
        Message::user("Comment this java code:\nint add(int a, int b) { return a + b; }"),
        Message::assistant("/** Adds. */"),
        Message::user("Mention both \"a\" and \"b\"."),
    ])
    .unwrap()
}

#[derive(Debug, Clone)]
struct Recorded {
    path: String,
    headers: HeaderMap,
    body: Bytes,
}

/// Status, body and delay in milliseconds.
type Reply = (u16, Vec<u8>, u64);

#[derive(Clone, Default)]
struct Mock {
    replies: Arc<Mutex<VecDeque<Reply>>>,
    seen: Arc<Mutex<Vec<Recorded>>>,
}

impl Mock {
    fn reply(&self, status: u16, body: impl Into<Vec<u8>>) -> &Self {
        self.replies.lock().unwrap().push_back((status, body.into(), 0));
        self
    }

    fn reply_after(&self, delay_ms: u64, status: u16, body: impl Into<Vec<u8>>) -> &Self {
        self.replies.lock().unwrap().push_back((status, body.into(), delay_ms));
        self
    }

    fn seen(&self) -> Vec<Recorded> {
        self.seen.lock().unwrap().clone()
    }
}

async fn record(State(mock): State<Mock>, uri: Uri, headers: HeaderMap, body: Bytes) -> (StatusCode, Vec<u8>) {
    mock.seen.lock().unwrap().push(Recorded {
        path: uri.path().to_owned(),
        headers,
        body,
    });
    let (status, body, delay) = mock
        .replies
        .lock()
        .unwrap()
        .pop_front()
        .unwrap_or((500, b"{}".to_vec(), 0));
    if delay > 0 {
        tokio::time::sleep(Duration::from_millis(delay)).await;
    }
    (StatusCode::from_u16(status).unwrap(), body)
}

async fn serve(mock: Mock) -> SocketAddr {
    let app = Router::new().fallback(record).with_state(mock);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

#[test]
fn openai_request_matches_golden_bytes() {
    std::env::set_var("MM_WIRE_OPENAI_KEY", "sk-golden");
    let c = config(ProviderKind::OpenaiCompatible, "https://api.example.com/v1", "gpt-4o-mini", "MM_WIRE_OPENAI_KEY");
    let payload = format_request(&c, &golden_request()).unwrap();
    assert_eq!(payload.method, "POST");
    assert_eq!(payload.path, "/v1/chat/completions");
    assert_eq!(payload.header("authorization"), Some("Bearer sk-golden"));
    assert_eq!(
        String::from_utf8(payload.body.clone()).unwrap(),
        String::from_utf8(fixture("openai_request.json")).unwrap()
    );
    check_request_body(ProviderKind::OpenaiCompatible, &payload.body).unwrap();
}

#[test]
fn gemini_request_matches_golden_bytes() {
    std::env::set_var("MM_WIRE_GEMINI_KEY", "AIza-golden");
    let c = config(
        ProviderKind::GeminiCompatible,
        "https://generativelanguage.example.com/v1beta",
        "gemini-1.5-flash",
        "MM_WIRE_GEMINI_KEY",
    );
    let payload = format_request(&c, &golden_request()).unwrap();
    assert_eq!(payload.path, "/v1beta/models/gemini-1.5-flash:generateContent");
    assert_eq!(payload.header("x-goog-api-key"), Some("AIza-golden"));
    assert!(!payload.path.contains("AIza"));
    assert_eq!(
        String::from_utf8(payload.body.clone()).unwrap(),
        String::from_utf8(fixture("gemini_request.json")).unwrap()
    );
    check_request_body(ProviderKind::GeminiCompatible, &payload.body).unwrap();
}

#[test]
fn recorded_replies_reproduce_fixture_text() {
    let expected = String::from_utf8(fixture("reply_text.txt")).unwrap();
    for (provider, reply, prompt, completion) in [
        (ProviderKind::OpenaiCompatible, "openai_reply.json", 58, 37),
        (ProviderKind::GeminiCompatible, "gemini_reply.json", 61, 39),
    ] {
        let c = config(provider, "https://h.example/v1", "m", "MM_WIRE_UNUSED");
        let r = parse_response(&c, 200, &fixture(reply), Duration::from_millis(12)).unwrap();
        assert_eq!(r.content, expected, "{provider:?}");
        assert_eq!(r.finish_reason, FinishReason::Stop);
        assert_eq!(r.latency_ms, 12);
        let usage = r.token_usage.unwrap();
        assert_eq!((usage.prompt, usage.completion), (prompt, completion));
    }
}

#[tokio::test]
async fn http_driver_sends_golden_body_to_server() {
    std::env::set_var("MM_WIRE_HTTP_KEY", "sk-http-roundtrip");
    for (provider, model, request_fixture, reply_fixture, path) in [
        (
            ProviderKind::OpenaiCompatible,
            "gpt-4o-mini",
            "openai_request.json",
            "openai_reply.json",
            "/v1/chat/completions",
        ),
        (
            ProviderKind::GeminiCompatible,
            "gemini-1.5-flash",
            "gemini_request.json",
            "gemini_reply.json",
            "/v1/models/gemini-1.5-flash:generateContent",
        ),
    ] {
        let mock = Mock::default();
        mock.reply(200, fixture(reply_fixture));
        let addr = serve(mock.clone()).await;
        let driver = HttpDriver::new(config(provider, &format!("http://{addr}/v1"), model, "MM_WIRE_HTTP_KEY")).unwrap();

        let response = driver.send(&golden_request()).await.unwrap();
        assert_eq!(response.content.as_bytes(), fixture("reply_text.txt"));

        let seen = mock.seen();
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0].path, path);
        assert_eq!(seen[0].body.as_ref(), fixture(request_fixture).as_slice());
        assert_eq!(seen[0].headers["content-type"], "application/json");
    }
}

#[tokio::test]
async fn status_codes_map_to_error_kinds() {
    std::env::set_var("MM_WIRE_STATUS_KEY", "sk-status");
    for (status, kind, attempts) in [
        (401, ErrorKind::Auth, 1),
        (403, ErrorKind::Auth, 1),
        (404, ErrorKind::MalformedResponse, 1),
        (429, ErrorKind::RateLimit, 2),
        (503, ErrorKind::Network, 2),
    ] {
        let mock = Mock::default();
        mock.reply(status, r#"{"error":{"message":"nope"}}"#)
            .reply(status, r#"{"error":{"message":"nope"}}"#);
        let addr = serve(mock.clone()).await;
        let driver = HttpDriver::new(config(
            ProviderKind::OpenaiCompatible,
            &format!("http://{addr}/v1"),
            "m",
            "MM_WIRE_STATUS_KEY",
        ))
        .unwrap();
        let err = driver.send(&AssistantRequest::user("hi").unwrap()).await.unwrap_err();
        assert_eq!(err.kind, kind, "HTTP {status}");
        assert!(err.message.contains("nope"));
        assert_eq!(mock.seen().len(), attempts, "HTTP {status}");
    }
}

#[tokio::test]
async fn retryable_failure_recovers_on_second_attempt() {
    std::env::set_var("MM_WIRE_RETRY_KEY", "sk-retry");
    let mock = Mock::default();
    mock.reply(503, "{}").reply(200, fixture("openai_reply.json"));
    let addr = serve(mock.clone()).await;
    let driver = HttpDriver::new(config(
        ProviderKind::OpenaiCompatible,
        &format!("http://{addr}/v1"),
        "m",
        "MM_WIRE_RETRY_KEY",
    ))
    .unwrap();
    let r = driver.send(&AssistantRequest::user("hi").unwrap()).await.unwrap();
    assert_eq!(r.content.as_bytes(), fixture("reply_text.txt"));
    assert_eq!(mock.seen().len(), 2);
    assert!(r.latency_ms >= 250);
}

#[tokio::test]
async fn malformed_success_body_is_not_retried() {
    std::env::set_var("MM_WIRE_MALFORMED_KEY", "sk-malformed");
    let mock = Mock::default();
    mock.reply(200, "<html>gateway</html>");
    let addr = serve(mock.clone()).await;
    let driver = HttpDriver::new(config(
        ProviderKind::GeminiCompatible,
        &format!("http://{addr}/"),
        "m",
        "MM_WIRE_MALFORMED_KEY",
    ))
    .unwrap();
    let err = driver.send(&AssistantRequest::user("hi").unwrap()).await.unwrap_err();
    assert_eq!(err.kind, ErrorKind::MalformedResponse);
    assert!(!err.retryable);
    assert_eq!(mock.seen().len(), 1);
}

#[tokio::test]
async fn slow_server_times_out() {
    std::env::set_var("MM_WIRE_SLOW_KEY", "sk-slow");
    let mock = Mock::default();
    mock.reply_after(2_000, 200, fixture("openai_reply.json"));
    let addr = serve(mock.clone()).await;
    let mut c = config(ProviderKind::OpenaiCompatible, &format!("http://{addr}/v1"), "m", "MM_WIRE_SLOW_KEY");
    c.timeout_ms = 150;
    let driver = HttpDriver::new(c).unwrap();
    let started = std::time::Instant::now();
    let err = driver.send(&AssistantRequest::user("hi").unwrap()).await.unwrap_err();
    assert_eq!(err.kind, ErrorKind::Timeout);
    assert!(started.elapsed() < Duration::from_millis(1_000));
}

#[tokio::test]
async fn unreachable_endpoint_is_network_error() {
    std::env::set_var("MM_WIRE_DOWN_KEY", "sk-down");
    // bind then drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut c = config(
        ProviderKind::OpenaiCompatible,
        &format!("http://127.0.0.1:{port}/v1"),
        "m",
        "MM_WIRE_DOWN_KEY",
    );
    c.timeout_ms = 5_000;
    let driver = HttpDriver::new(c).unwrap();
    let err = driver.send(&AssistantRequest::user("hi").unwrap()).await.unwrap_err();
    assert_eq!(err.kind, ErrorKind::Network);
    assert!(err.retryable);
}

#[tokio::test]
async fn missing_credential_is_auth_error_without_network() {
    let mock = Mock::default();
    let addr = serve(mock.clone()).await;
    let driver = HttpDriver::new(config(
        ProviderKind::OpenaiCompatible,
        &format!("http://{addr}/v1"),
        "m",
        "MM_WIRE_NEVER_SET_KEY",
    ))
    .unwrap();
    let err = driver.send(&AssistantRequest::user("hi").unwrap()).await.unwrap_err();
    assert_eq!(err.kind, ErrorKind::Auth);
    assert!(mock.seen().is_empty());
}

#[tokio::test]
async fn credential_never_leaks_into_errors_or_bodies() {
    const SENTINEL: &str = "sk-SENTINEL-7f3a9c";
    std::env::set_var("MM_WIRE_LEAK_KEY", SENTINEL);
    let echo_secret = format!(r#"{{"error":{{"message":"bad key {SENTINEL}"}}}}"#);
    for status in [401, 400, 500] {
        for provider in [ProviderKind::OpenaiCompatible, ProviderKind::GeminiCompatible] {
            let mock = Mock::default();
            mock.reply(status, echo_secret.clone()).reply(status, echo_secret.clone());
            let addr = serve(mock.clone()).await;
            let driver = HttpDriver::new(config(provider, &format!("http://{addr}/v1"), "m", "MM_WIRE_LEAK_KEY")).unwrap();
            let err = driver.send(&AssistantRequest::user("hi").unwrap()).await.unwrap_err();
            let rendered = format!("{err} {err:?} {}", serde_json::to_string(&err).unwrap());
            assert!(!rendered.contains(SENTINEL), "{rendered}");
            assert!(rendered.contains("<redacted>"));

            for seen in mock.seen() {
                assert!(!String::from_utf8_lossy(&seen.body).contains(SENTINEL));
                assert!(!seen.path.contains(SENTINEL));
            }
        }
    }

    let c = config(ProviderKind::GeminiCompatible, "https://h.example/v1", "m", "MM_WIRE_LEAK_KEY");
    let payload = format_request(&c, &AssistantRequest::user("hi").unwrap()).unwrap();
    assert!(!format!("{payload:?}").contains(SENTINEL));
    assert!(!serde_json::to_string(&c).unwrap().contains(SENTINEL));
}
