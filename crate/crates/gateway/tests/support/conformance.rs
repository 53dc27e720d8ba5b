//! Replays a recorded request/response suite against a live gateway.
//!
//! Expected bodies are matched structurally: objects must contain the
//! listed keys with matching values, arrays must have the same length and
//! match element-wise. `"exact": true` demands equality. Every response must
//! be a non-empty JSON document free of the suite's secrets.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use multimind_gateway::{api, Engine, EngineConfig};
use serde_json::Value;

pub struct Outcome {
    pub name: String,
    pub failure: Option<String>,
}

pub fn subset(expected: &Value, actual: &Value, at: &str) -> Result<(), String> {
    match (expected, actual) {
        (Value::Object(e), Value::Object(a)) => {
            for (k, ev) in e {
                let here = format!("{at}/{k}");
                match a.get(k) {
                    Some(av) => subset(ev, av, &here)?,
                    None if ev.is_null() => {}
                    None => return Err(format!("{here}: missing")),
                }
            }
            Ok(())
        }
        (Value::Array(e), Value::Array(a)) => {
            if e.len() != a.len() {
                return Err(format!("{at}: expected {} elements, got {}", e.len(), a.len()));
            }
            for (i, (ev, av)) in e.iter().zip(a).enumerate() {
                subset(ev, av, &format!("{at}/{i}"))?;
            }
            Ok(())
        }
        (e, a) if e == a => Ok(()),
        (e, a) => Err(format!("{at}: expected {e}, got {a}")),
    }
}

fn fill(template: &str, captures: &HashMap<String, String>) -> String {
    captures
        .iter()
        .fold(template.to_owned(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

/// Starts an engine from the suite's config, replays every exchange in
/// order and reports one outcome per exchange.
pub async fn run(path: &Path) -> Vec<Outcome> {
    let suite: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    for (k, v) in suite["env"].as_object().into_iter().flatten() {
        std::env::set_var(k, v.as_str().unwrap());
    }
    let secrets: Vec<String> = suite["secrets"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|s| s.as_str().unwrap().to_owned())
        .collect();
    let config: EngineConfig = serde_json::from_value(suite["config"].clone()).unwrap();
    let token = config.auth_token.clone();
    let engine = Arc::new(Engine::new(config).unwrap());

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let server = tokio::spawn(api::serve_on(listener, engine));
    let client = reqwest::Client::new();

    let mut captures = HashMap::new();
    let mut outcomes = Vec::new();
    for exchange in suite["exchanges"].as_array().unwrap() {
        let name = exchange["name"].as_str().unwrap().to_owned();
        let failure = replay(&client, &base, token.as_deref(), exchange, &secrets, &mut captures)
            .await
            .err();
        outcomes.push(Outcome { name, failure });
    }
    server.abort();
    outcomes
}

async fn replay(
    client: &reqwest::Client,
    base: &str,
    token: Option<&str>,
    exchange: &Value,
    secrets: &[String],
    captures: &mut HashMap<String, String>,
) -> Result<(), String> {
    let method: reqwest::Method = exchange["method"].as_str().unwrap().parse().unwrap();
    let path = fill(exchange["path"].as_str().unwrap(), captures);
    let mut request = client.request(method, format!("{base}{path}"));

    let auth = match exchange.get("auth") {
        None => token.map(|t| format!("Bearer {t}")),
        Some(Value::Null) => None,
        Some(v) => Some(v.as_str().unwrap().to_owned()),
    };
    if let Some(a) = auth {
        request = request.header("authorization", a);
    }
    if let Some(raw) = exchange.get("raw") {
        request = request.body(raw.as_str().unwrap().to_owned());
    } else if let Some(body) = exchange.get("request") {
        request = request
            .header("content-type", "application/json")
            .body(fill(&body.to_string(), captures));
    }

    let response = request.send().await.map_err(|e| format!("request failed: {e}"))?;
    let status = response.status().as_u16();
    let text = response.text().await.map_err(|e| format!("body unreadable: {e}"))?;

    for secret in secrets {
        if text.contains(secret.as_str()) {
            return Err("response body contains a credential".into());
        }
    }
    let expected_status = exchange["status"].as_u64().unwrap() as u16;
    if status != expected_status {
        return Err(format!("status {status}, expected {expected_status}: {text}"));
    }
    if text.trim().is_empty() {
        return Err("empty response body".into());
    }
    let actual: Value = serde_json::from_str(&text).map_err(|e| format!("body is not JSON ({e}): {text}"))?;
    if status >= 400 {
        let shaped = actual["kind"].is_string() && actual["message"].as_str().is_some_and(|m| !m.is_empty());
        if !shaped {
            return Err(format!("error body lacks kind/message: {text}"));
        }
    }

    let expected = &exchange["body"];
    if exchange["exact"].as_bool() == Some(true) {
        if &actual != expected {
            return Err(format!("expected exactly {expected}, got {actual}"));
        }
    } else {
        subset(expected, &actual, "").map_err(|e| format!("{e}\n  body: {text}"))?;
    }
    if let Some(needle) = exchange["contains"].as_str() {
        if !text.contains(needle) {
            return Err(format!("body lacks {needle:?}: {text}"));
        }
    }
    for (name, pointer) in exchange["capture"].as_object().into_iter().flatten() {
        let value = actual
            .pointer(pointer.as_str().unwrap())
            .and_then(Value::as_str)
            .ok_or_else(|| format!("nothing to capture at {pointer}"))?;
        captures.insert(name.clone(), value.to_owned());
    }
    Ok(())
}
