//! Sidecar HTTP service: per-turn ingestion and pruning through the same
//! engine the CLI commands use, so both surfaces produce identical
//! selections for identical state.
//!
//! Writes are serialized per dialogue (appends embed inside the
//! dialogue's write lock, so index assignment cannot race); prunes take
//! the read side and run freely concurrently. Provider calls use the
//! blocking HTTP client, so every handler hops to a blocking thread.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use dycp_core::{DialogueHistory, DycpError, EmbeddingProvider, PruneConfig, PruneResponse};

type SharedHistory = Arc<RwLock<DialogueHistory>>;

pub struct ServiceState {
    dialogues: RwLock<HashMap<String, SharedHistory>>,
    provider: Box<dyn EmbeddingProvider>,
    defaults: PruneConfig,
}

enum PruneFailure {
    UnknownDialogue(String),
    Engine(DycpError),
}

impl ServiceState {
    pub fn new(provider: Box<dyn EmbeddingProvider>, defaults: PruneConfig) -> Self {
        ServiceState { dialogues: RwLock::new(HashMap::new()), provider, defaults }
    }

    /// Installs already-built histories (startup preload).
    pub fn preload(&self, histories: Vec<DialogueHistory>) {
        let mut map = self.dialogues.write().unwrap();
        for h in histories {
            map.insert(h.dialogue_id().to_string(), Arc::new(RwLock::new(h)));
        }
    }

    fn entry(&self, id: &str) -> SharedHistory {
        if let Some(h) = self.dialogues.read().unwrap().get(id) {
            return h.clone();
        }
        self.dialogues
            .write()
            .unwrap()
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(RwLock::new(DialogueHistory::new(id))))
            .clone()
    }

    fn append(&self, id: &str, req: &AppendRequest) -> Result<(), DycpError> {
        let entry = self.entry(id);
        let mut history = entry.write().unwrap();
        if let Some(index) = req.index {
            let next = history.turn_count() + 1;
            if index != next {
                return Err(DycpError::Validation(format!(
                    "index {index} out of order: next turn of {id:?} is {next}"
                )));
            }
        }
        history.append_turn(&req.user, &req.agent, self.provider.as_ref())
    }

    fn prune(&self, id: &str, req: &PruneRequest) -> Result<PruneResponse, PruneFailure> {
        let entry = {
            let map = self.dialogues.read().unwrap();
            map.get(id).cloned().ok_or_else(|| PruneFailure::UnknownDialogue(id.to_string()))?
        };
        let config = PruneConfig {
            tau: req.tau.unwrap_or(self.defaults.tau),
            theta: req.theta.unwrap_or(self.defaults.theta),
            ..self.defaults
        };
        let history = entry.read().unwrap();
        let selection =
            dycp_core::prune(&history.view(), &req.query, self.provider.as_ref(), &config)
                .map_err(PruneFailure::Engine)?;
        Ok(PruneResponse::from(&selection))
    }

    /// Writes one embedding-cache file per dialogue; returns how many.
    pub fn snapshot_caches(&self, dir: &Path) -> Result<usize, DycpError> {
        std::fs::create_dir_all(dir)?;
        let map = self.dialogues.read().unwrap();
        for entry in map.values() {
            let history = entry.read().unwrap();
            let file = dir.join(format!("{}.emb", crate::ops::safe_file_name(history.dialogue_id())));
            dycp_core::save_cache(&history, &file)?;
        }
        Ok(map.len())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AppendRequest {
    #[serde(default)]
    index: Option<usize>,
    user: String,
    agent: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PruneRequest {
    query: String,
    #[serde(default)]
    tau: Option<f64>,
    #[serde(default)]
    theta: Option<f64>,
}

fn structured_error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn engine_error_response(err: DycpError) -> Response {
    match &err {
        DycpError::ProviderTransport(_) | DycpError::ProviderContract(_) => {
            let mut resp = structured_error(StatusCode::BAD_GATEWAY, err.to_string());
            resp.headers_mut().insert("Retry-After", HeaderValue::from_static("1"));
            resp
        }
        _ => structured_error(StatusCode::BAD_REQUEST, err.to_string()),
    }
}

async fn post_turn(
    State(state): State<Arc<ServiceState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AppendRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(rej) => return structured_error(StatusCode::BAD_REQUEST, rej.body_text()),
    };
    let outcome = tokio::task::spawn_blocking(move || state.append(&id, &req))
        .await
        .expect("append task");
    match outcome {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => engine_error_response(e),
    }
}

async fn post_prune(
    State(state): State<Arc<ServiceState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<PruneRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(rej) => return structured_error(StatusCode::BAD_REQUEST, rej.body_text()),
    };
    let outcome = tokio::task::spawn_blocking(move || state.prune(&id, &req))
        .await
        .expect("prune task");
    match outcome {
        Ok(response) => Json(response).into_response(),
        Err(PruneFailure::UnknownDialogue(id)) => {
            structured_error(StatusCode::NOT_FOUND, format!("unknown dialogue {id:?}"))
        }
        Err(PruneFailure::Engine(e)) => engine_error_response(e),
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/dialogues/:id/turns", post(post_turn))
        .route("/dialogues/:id/prune", post(post_prune))
        .with_state(state)
}

/// Binds, announces the bound address on stdout, and serves until
/// interrupted; then snapshots caches when a directory was configured.
pub fn serve_blocking(
    state: Arc<ServiceState>,
    port: u16,
    snapshot_dir: Option<PathBuf>,
) -> dycp_core::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        if let Some(dir) = snapshot_dir {
            let n = state.snapshot_caches(&dir)?;
            println!("snapshotted {n} dialogue caches to {}", dir.display());
        }
        Ok(())
    })
}
