use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use clarify_gateway::{BackendConfig, ChatBackend, GatewayError, HttpBackend, Message, RetryPolicy};
use serde_json::{json, Value};

#[derive(Clone, Copy)]
enum Mode {
    RateLimitedOnce,
    Hang,
    NotJson,
    Slow,
    BadRequest,
}

#[derive(Clone)]
struct Mock {
    mode: Mode,
    calls: Arc<AtomicUsize>,
    active: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

fn ok_body(text: &str) -> Value {
    json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 7, "completion_tokens": 3}
    })
}

async fn handler(State(m): State<Mock>, Json(req): Json<Value>) -> Response {
    let n = m.calls.fetch_add(1, Ordering::SeqCst);
    match m.mode {
        Mode::RateLimitedOnce if n == 0 => (StatusCode::TOO_MANY_REQUESTS, "slow down").into_response(),
        Mode::RateLimitedOnce => {
            assert_eq!(req["model"], "m");
            assert_eq!(req["messages"][0]["role"], "user");
            Json(ok_body("fine")).into_response()
        }
        Mode::Hang => {
            tokio::time::sleep(Duration::from_secs(5)).await;
            Json(ok_body("late")).into_response()
        }
        Mode::NotJson => (StatusCode::OK, "<html>oops</html>").into_response(),
        Mode::BadRequest => (StatusCode::BAD_REQUEST, "bad").into_response(),
        Mode::Slow => {
            let now = m.active.fetch_add(1, Ordering::SeqCst) + 1;
            m.peak.fetch_max(now, Ordering::SeqCst);
            tokio::time::sleep(Duration::from_millis(40)).await;
            m.active.fetch_sub(1, Ordering::SeqCst);
            Json(ok_body("done")).into_response()
        }
    }
}

async fn serve(mode: Mode) -> (String, Mock) {
    let mock = Mock {
        mode,
        calls: Arc::default(),
        active: Arc::default(),
        peak: Arc::default(),
    };
    let app = Router::new().route("/v1/chat/completions", post(handler)).with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), mock)
}

fn config(url: &str) -> BackendConfig {
    let mut cfg = BackendConfig::new("mock", url, "m");
    cfg.retry = RetryPolicy { max_attempts: 3, backoff_base_ms: 10, backoff_max_ms: 50 };
    cfg
}

fn prompt() -> Vec<Message> {
    vec![Message::user("hello")]
}

#[tokio::test]
async fn rate_limit_then_success_counts_one_retry() {
    let (url, mock) = serve(Mode::RateLimitedOnce).await;
    let backend = HttpBackend::new(config(&url)).unwrap();
    let out = backend.complete(&prompt()).await.unwrap();
    assert_eq!(out.text, "fine");
    assert_eq!(out.usage.retries, 1);
    assert_eq!(out.usage.prompt_tokens, 7);
    assert_eq!(mock.calls.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn timeouts_exhaust_attempts() {
    let (url, mock) = serve(Mode::Hang).await;
    let mut cfg = config(&url);
    cfg.timeout_secs = 0.2;
    let backend = HttpBackend::new(cfg).unwrap();
    let err = backend.complete(&prompt()).await.unwrap_err();
    assert!(
        matches!(err, GatewayError::RetriesExhausted { attempts: 3, last_status: None, .. }),
        "{err:?}"
    );
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn non_json_is_protocol_error() {
    let (url, mock) = serve(Mode::NotJson).await;
    let backend = HttpBackend::new(config(&url)).unwrap();
    let err = backend.complete(&prompt()).await.unwrap_err();
    assert!(matches!(err, GatewayError::Protocol { .. }), "{err:?}");
    assert_eq!(mock.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn client_error_is_not_retried() {
    let (url, mock) = serve(Mode::BadRequest).await;
    let backend = HttpBackend::new(config(&url)).unwrap();
    let err = backend.complete(&prompt()).await.unwrap_err();
    assert!(matches!(err, GatewayError::Http { status: 400, .. }), "{err:?}");
    assert_eq!(mock.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn in_flight_cap_is_respected() {
    let (url, mock) = serve(Mode::Slow).await;
    let mut cfg = config(&url);
    cfg.max_in_flight = 2;
    let backend = Arc::new(HttpBackend::new(cfg).unwrap());
    let tasks: Vec<_> = (0..10)
        .map(|_| {
            let b = backend.clone();
            tokio::spawn(async move { b.complete(&prompt()).await.unwrap() })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap().text, "done");
    }
    assert_eq!(mock.calls.load(Ordering::SeqCst), 10);
    assert_eq!(mock.peak.load(Ordering::SeqCst), 2);
}
