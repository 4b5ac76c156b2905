//! Local chat-completion stub: scripted failures, per-request delay,
//! in-flight accounting.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

pub const STUB_KEY: &str = "sk-stub-0123456789abcdef";
/// Prompts containing this marker get an empty completion.
pub const EMPTY_MARKER: &str = "<<empty>>";

#[derive(Default)]
pub struct StubState {
    pub hits: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    /// Status codes returned, in order, before requests start succeeding.
    pub failures: Mutex<Vec<u16>>,
    pub delay_ms: u64,
    pub bad_auth: AtomicUsize,
}

impl StubState {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

/// Echoes the text after the first ": " on the line holding the post, i.e.
/// the second-to-last line of a prompt that ends with an answer cue, or the
/// last line otherwise.
pub fn stub_completion(prompt: &str) -> String {
    if prompt.contains(EMPTY_MARKER) {
        return String::new();
    }
    let lines: Vec<&str> = prompt.lines().collect();
    let line = if lines.len() >= 2 && lines[lines.len() - 1].ends_with(':') {
        lines[lines.len() - 2]
    } else {
        lines.last().copied().unwrap_or("")
    };
    line.split_once(':')
        .map_or(line, |(_, rest)| rest)
        .trim()
        .to_string()
}

async fn completions(
    State(state): State<Arc<StubState>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    state.hits.fetch_add(1, Ordering::SeqCst);
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_in_flight.fetch_max(now, Ordering::SeqCst);
    if state.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(state.delay_ms)).await;
    }
    let auth_ok = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v == format!("Bearer {STUB_KEY}"));
    let scripted = {
        let mut f = state.failures.lock().unwrap();
        (!f.is_empty()).then(|| f.remove(0))
    };
    let reply = if !auth_ok {
        state.bad_auth.fetch_add(1, Ordering::SeqCst);
        (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})))
    } else if let Some(code) = scripted {
        (
            StatusCode::from_u16(code).unwrap(),
            Json(json!({"error": "scripted"})),
        )
    } else {
        let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
        let content = stub_completion(prompt);
        (
            StatusCode::OK,
            Json(json!({
                "id": "cmpl-stub",
                "model": body["model"],
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
            })),
        )
    };
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
    reply
}

pub struct Stub {
    pub addr: SocketAddr,
    pub state: Arc<StubState>,
}

impl Stub {
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Endpoint TOML with near-zero backoff so retry tests run fast.
    pub fn endpoint_toml(&self, key_env: &str) -> String {
        format!(
            "base_url = \"{}\"\nmodel_id = \"stub-model\"\napi_key_env = \"{key_env}\"\ntimeout_secs = 10\n\n[retry]\nbase_delay_secs = 0.001\nmax_delay_secs = 0.01\n",
            self.base_url()
        )
    }
}

/// Binds an ephemeral loopback port and serves on the current runtime.
pub async fn spawn_stub(state: StubState) -> Stub {
    let state = Arc::new(state);
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Stub { addr, state }
}
