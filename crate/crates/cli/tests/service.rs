mod common;

use std::future::IntoFuture;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use retgen_cli::commands::build_ensemble;
use retgen_cli::config::AppConfig;
use retgen_cli::server::{checksums, router, AppState, JSON_UTF8};
use retgen_cli::wire::{ChatResponseWire, ErrorBody};
use retgen_core::ensemble::Provenance;

fn state(with_generator: bool) -> (tempfile::TempDir, Arc<AppState>) {
    let dir = tempfile::tempdir().unwrap();
    let desk = common::build_desk(dir.path(), 60, 5, 2, false);
    let cfg_path = common::write_config(&desk, "");
    let mut cfg = AppConfig::load(Some(&cfg_path)).unwrap();
    if !with_generator {
        cfg.artifacts.generator = None;
        cfg.ensemble.mode = retgen_core::ensemble::Mode::RetrievalOnly;
    }
    let ensemble = build_ensemble(&cfg).unwrap();
    let sums = checksums(&cfg).unwrap();
    (dir, Arc::new(AppState::new(ensemble, cfg, sums)))
}

async fn call(app: &axum::Router, method: Method, uri: &str, body: &str) -> (StatusCode, String, serde_json::Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_owned())
        .unwrap_or_default();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, ctype, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn chat_contract() {
    let (_dir, st) = state(true);
    let app = router(st.clone(), true);

    let (s, ctype, v) = call(&app, Method::POST, "/chat", r#"{"query": "my camera battery is so bad"}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype, JSON_UTF8);
    let wire: ChatResponseWire = serde_json::from_value(v).unwrap();
    wire.validate().unwrap();
    assert_eq!(wire.model_versions, st.model_versions);
    assert_eq!(wire.model_versions["architecture"], "biseq2seq");

    let (s, _, v) = call(
        &app,
        Method::POST,
        "/chat",
        r#"{"query": "camera battery", "mode": "retrieval_only"}"#,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let wire: ChatResponseWire = serde_json::from_value(v).unwrap();
    assert_eq!(wire.provenance, Provenance::Retrieved);
    assert_eq!(wire.candidates.len(), 1);

    let (s, _, v) = call(
        &app,
        Method::POST,
        "/chat",
        r#"{"query": "camera battery", "mode": "generation_only", "decode": {"beam_width": 3, "max_len": 5}}"#,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let wire: ChatResponseWire = serde_json::from_value(v).unwrap();
    wire.validate().unwrap();
    assert_ne!(wire.provenance, Provenance::Retrieved);
    assert!(wire.reply.split(' ').count() <= 5);

    for (body, code) in [
        ("not json", StatusCode::BAD_REQUEST),
        ("[1]", StatusCode::BAD_REQUEST),
        (r#"{"q": "x"}"#, StatusCode::BAD_REQUEST),
        (r#"{"query": "   "}"#, StatusCode::BAD_REQUEST),
        (r#"{"query": "x", "mode": "both"}"#, StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"query": "x", "decode": {"beam_width": 0}}"#, StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"query": "x", "decode": {"max_len": 100000}}"#, StatusCode::UNPROCESSABLE_ENTITY),
    ] {
        let (s, ctype, v) = call(&app, Method::POST, "/chat", body).await;
        assert_eq!(s, code, "{body}");
        assert_eq!(ctype, JSON_UTF8);
        let e: ErrorBody = serde_json::from_value(v).unwrap();
        assert!(!e.detail.is_empty());
    }

    let (s, _, v) = call(&app, Method::GET, "/chat", "").await;
    assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(v["error"], "method_not_allowed");
    let (s, _, v) = call(&app, Method::GET, "/nowhere", "").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");
}

#[tokio::test]
async fn health_and_config() {
    let (_dir, st) = state(true);
    let app = router(st.clone(), false);
    let (s, _, v) = call(&app, Method::GET, "/health", "").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert!(v["uptime_s"].as_f64().unwrap() >= 0.0);

    let (s, _, v) = call(&app, Method::GET, "/config", "").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["config"]["index"]["k"], 1000);
    let names: Vec<&str> = v["artifacts"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        ["pairs", "index", "matcher", "generator", "generator.payload", "generator.enc_vocab", "generator.dec_vocab"]
    );
    for a in v["artifacts"].as_array().unwrap() {
        assert_eq!(a["sha256"].as_str().unwrap().len(), 64);
    }
}

#[tokio::test]
async fn generation_modes_need_a_generator() {
    let (_dir, st) = state(false);
    let app = router(st, true);
    let (s, _, _) = call(&app, Method::POST, "/chat", r#"{"query": "camera", "mode": "generation_only"}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _, v) = call(&app, Method::POST, "/chat", r#"{"query": "camera", "mode": "retrieval_only"}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["model_versions"].get("architecture").is_none());
}

#[tokio::test]
async fn cors_preflight() {
    let (_dir, st) = state(false);
    let req = || {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/chat")
            .header("origin", "http://example.test")
            .header("access-control-request-method", "POST")
            .body(Body::empty())
            .unwrap()
    };
    let resp = router(st.clone(), true).oneshot(req()).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
    let resp = router(st, false).oneshot(req()).await.unwrap();
    assert!(!resp.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test]
async fn serves_over_tcp() {
    let (_dir, st) = state(true);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = tokio::spawn(axum::serve(listener, router(st, true)).into_future());

    let body = r#"{"query": "pizza recipe"}"#;
    let raw = format!(
        "POST /chat HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let buf = tokio::task::spawn_blocking(move || {
        use std::io::{Read, Write};
        let mut stream = std::net::TcpStream::connect(addr).unwrap();
        stream.write_all(raw.as_bytes()).unwrap();
        let mut buf = Vec::new();
        stream.read_to_end(&mut buf).unwrap();
        buf
    })
    .await
    .unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("HTTP/1.1 200"), "{text}");
    let json = text.split("\r\n\r\n").nth(1).unwrap();
    let wire: ChatResponseWire = serde_json::from_str(json).unwrap();
    wire.validate().unwrap();
    server.abort();
}
