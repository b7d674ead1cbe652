//! Scripted chat-completions server for deterministic tests.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::task::JoinHandle;
use tokio::time::Instant;

/// What the server does with one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Content(String),
    Status(u16),
}

type Responder = dyn Fn(&Value, usize) -> MockReply + Send + Sync;

/// One received request.
#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub at: Instant,
    pub body: Value,
    pub authorization: Option<String>,
}

struct MockState {
    script: Mutex<VecDeque<MockReply>>,
    responder: Box<Responder>,
    // per-conversation counters keep cycling deterministic under concurrency
    seen: Mutex<HashMap<String, usize>>,
    requests: Mutex<Vec<RecordedRequest>>,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    task: JoinHandle<()>,
}

impl MockServer {
    /// Serves `script` in order, then falls back to `responder`, which gets
    /// the request body and how many times that exact conversation was seen
    /// before.
    pub async fn start<F>(script: Vec<MockReply>, responder: F) -> std::io::Result<Self>
    where
        F: Fn(&Value, usize) -> MockReply + Send + Sync + 'static,
    {
        let state = Arc::new(MockState {
            script: Mutex::new(script.into()),
            responder: Box::new(responder),
            seen: Mutex::new(HashMap::new()),
            requests: Mutex::new(Vec::new()),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(handle))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self { addr, state, task })
    }

    /// Always answers with `text`.
    pub async fn constant(text: &str) -> std::io::Result<Self> {
        let text = text.to_string();
        Self::start(vec![], move |_, _| MockReply::Content(text.clone())).await
    }

    /// Repeats of the same conversation walk through `answers` cyclically.
    pub async fn cycle(answers: &[&str]) -> std::io::Result<Self> {
        let answers: Vec<String> = answers.iter().map(|s| s.to_string()).collect();
        Self::start(vec![], move |_, k| {
            MockReply::Content(answers[k % answers.len()].clone())
        })
        .await
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.lock().unwrap().len()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Text of the last message in a chat body.
pub fn last_message(body: &Value) -> &str {
    body["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or("")
}

async fn handle(State(state): State<Arc<MockState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    state.requests.lock().unwrap().push(RecordedRequest {
        at: Instant::now(),
        body: body.clone(),
        authorization: headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string),
    });
    let scripted = state.script.lock().unwrap().pop_front();
    let reply = scripted.unwrap_or_else(|| {
        let key = body["messages"].to_string();
        let k = {
            let mut seen = state.seen.lock().unwrap();
            let e = seen.entry(key).or_insert(0);
            *e += 1;
            *e - 1
        };
        (state.responder)(&body, k)
    });
    match reply {
        MockReply::Content(text) => Json(json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]
        }))
        .into_response(),
        MockReply::Status(code) => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, Json(json!({"error": {"message": "scripted failure"}}))).into_response()
        }
    }
}
