//! HTTP service: `POST /chat`, `GET /health`, `GET /config`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tower_http::cors::CorsLayer;

use retgen_core::ensemble::Ensemble;
use retgen_core::matcher::FEATURE_SET_VERSION;
use retgen_core::neural::{CheckpointManifest, CHECKPOINT_VERSION};

use crate::config::AppConfig;
use crate::wire::{ChatRequest, ChatResponseWire, ErrorBody, RequestError};
use crate::CliError;

pub const JSON_UTF8: &str = "application/json; charset=utf-8";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactChecksum {
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every file the service reads, including the files a generator manifest
/// points at.
pub fn artifact_files(config: &AppConfig) -> Result<Vec<(String, PathBuf)>, CliError> {
    let paths = config.artifact_paths()?;
    let mut files = vec![
        ("pairs".to_owned(), paths.pairs),
        ("index".to_owned(), paths.index),
        ("matcher".to_owned(), paths.matcher),
    ];
    if let Some(manifest_path) = paths.generator {
        let manifest = CheckpointManifest::load(&manifest_path)
            .map_err(|e| CliError::Runtime(format!("artifact `generator`: {e}")))?;
        for (name, reference) in [
            ("generator.payload", &manifest.payload),
            ("generator.enc_vocab", &manifest.enc_vocab),
            ("generator.dec_vocab", &manifest.dec_vocab),
        ] {
            files.push((name.to_owned(), CheckpointManifest::resolve(&manifest_path, reference)));
        }
        files.insert(3, ("generator".to_owned(), manifest_path));
    }
    Ok(files)
}

pub fn checksums(config: &AppConfig) -> Result<Vec<ArtifactChecksum>, CliError> {
    artifact_files(config)?
        .into_iter()
        .map(|(name, path)| {
            let sha256 = sha256_file(&path)?;
            Ok(ArtifactChecksum { name, path, sha256 })
        })
        .collect()
}

pub struct AppState {
    pub ensemble: Ensemble,
    pub config: AppConfig,
    pub checksums: Vec<ArtifactChecksum>,
    pub model_versions: BTreeMap<String, String>,
    pub started: Instant,
}

impl AppState {
    pub fn new(ensemble: Ensemble, config: AppConfig, checksums: Vec<ArtifactChecksum>) -> Self {
        let mut model_versions = BTreeMap::new();
        for c in &checksums {
            if ["pairs", "index", "matcher", "generator"].contains(&c.name.as_str()) {
                model_versions.insert(c.name.clone(), c.sha256[..12].to_owned());
            }
        }
        if let Some(g) = &ensemble.artifacts().generator {
            model_versions.insert("architecture".into(), g.model.arch.as_str().into());
        }
        model_versions.insert("checkpoint_format".into(), CHECKPOINT_VERSION.to_string());
        model_versions.insert("feature_set".into(), FEATURE_SET_VERSION.to_string());
        AppState {
            ensemble,
            config,
            checksums,
            model_versions,
            started: Instant::now(),
        }
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match serde_json::to_vec(body) {
        Ok(bytes) => {
            let mut r = (status, bytes).into_response();
            r.headers_mut()
                .insert(header::CONTENT_TYPE, HeaderValue::from_static(JSON_UTF8));
            r
        }
        Err(e) => {
            let mut r = (StatusCode::INTERNAL_SERVER_ERROR, format!("{{\"error\":\"internal\",\"detail\":{:?}}}", e.to_string()))
                .into_response();
            r.headers_mut()
                .insert(header::CONTENT_TYPE, HeaderValue::from_static(JSON_UTF8));
            r
        }
    }
}

fn error_response(status: StatusCode, error: &str, detail: impl Into<String>) -> Response {
    json_response(
        status,
        &ErrorBody {
            error: error.to_owned(),
            detail: detail.into(),
        },
    )
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req = match ChatRequest::parse(&body) {
        Ok(r) => r,
        Err(RequestError::BadRequest(d)) => return error_response(StatusCode::BAD_REQUEST, "bad_request", d),
        Err(RequestError::Unprocessable(d)) => {
            return error_response(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", d)
        }
    };
    let decode = match req.decode_config(state.ensemble.config().decode) {
        Ok(d) => d,
        Err(RequestError::BadRequest(d)) => return error_response(StatusCode::BAD_REQUEST, "bad_request", d),
        Err(RequestError::Unprocessable(d)) => {
            return error_response(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", d)
        }
    };
    if state.ensemble.tokenize(&req.query).is_empty() {
        return error_response(StatusCode::BAD_REQUEST, "bad_request", "query is empty");
    }
    if req.mode != retgen_core::ensemble::Mode::RetrievalOnly && state.ensemble.artifacts().generator.is_none() {
        return error_response(
            StatusCode::UNPROCESSABLE_ENTITY,
            "unprocessable",
            format!("mode {} needs a generator, none is loaded", req.mode),
        );
    }
    let worker = Arc::clone(&state);
    let result =
        tokio::task::spawn_blocking(move || worker.ensemble.respond_with(&req.query, req.mode, decode)).await;
    match result {
        Ok(Ok(resp)) => json_response(
            StatusCode::OK,
            &ChatResponseWire::from_response(&resp, state.model_versions.clone()),
        ),
        Ok(Err(e)) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    uptime_s: f64,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    json_response(
        StatusCode::OK,
        &Health {
            status: "ok",
            uptime_s: state.started.elapsed().as_secs_f64(),
        },
    )
}

#[derive(Serialize)]
struct ConfigView<'a> {
    config: &'a AppConfig,
    artifacts: &'a [ArtifactChecksum],
    model_versions: &'a BTreeMap<String, String>,
}

async fn config(State(state): State<Arc<AppState>>) -> Response {
    json_response(
        StatusCode::OK,
        &ConfigView {
            config: &state.config,
            artifacts: &state.checksums,
            model_versions: &state.model_versions,
        },
    )
}

async fn not_found() -> Response {
    error_response(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> Response {
    error_response(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "wrong method for this endpoint")
}

pub fn router(state: Arc<AppState>, cors: bool) -> Router {
    let app = Router::new()
        .route("/chat", post(chat))
        .route("/health", get(health))
        .route("/config", get(config))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state);
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr, cors: bool) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Runtime(format!("bind {addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!("listening on http://{local}");
    eprintln!("listening on http://{local}");
    axum::serve(listener, router(state, cors))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Runtime(e.to_string()))
}
