//! JSON HTTP API over chat sessions and profile stores.
//!
//! ```text
//! POST   /sessions                    {character, version?}      -> {session_id, character, version}
//! POST   /sessions/{id}/turns         {user_text}                -> {index, user_text, response, triggered, trace}
//! GET    /sessions/{id}                                          -> transcript
//! DELETE /sessions/{id}                                          -> transcript written to disk
//! GET    /profiles                                               -> characters with stores
//! GET    /profiles/{character}/versions                          -> version list + revisions
//! GET    /profiles/{character}/versions/{n}                      -> sources, provenance, changed segments
//! POST   /eval/preview                {character, version?, scene} -> {response, triggered, trace}
//! ```

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::Result;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cprof_core::bench::CharacterPrograms;
use cprof_core::engine::Scene;
use cprof_core::evolver::{changed_segments, StoreError, VersionStore};
use cprof_core::llm::LlmClient;
use cprof_core::oracles::ConditionOracle;
use cprof_core::responder::{respond, ChatSession, ChatTurn, Grounding, Mode, ResponderConfig};
use serde::Deserialize;
use serde_json::{json, Value};
use tracing::info;

use crate::backends;
use crate::commands::responder_config;
use crate::config::RunConfig;

pub struct AppState {
    profiles: PathBuf,
    transcripts: PathBuf,
    client: Arc<LlmClient>,
    oracle: Arc<dyn ConditionOracle>,
    responder: ResponderConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<ChatSession>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(cfg: &RunConfig, client: Arc<LlmClient>, oracle: Arc<dyn ConditionOracle>) -> Self {
        Self {
            profiles: cfg.paths.profiles.clone(),
            transcripts: cfg.paths.output.join("transcripts"),
            client,
            oracle,
            responder: responder_config(cfg),
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<ChatSession>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    fn store(&self, character: &str) -> Result<VersionStore, ApiError> {
        VersionStore::open(&self.profiles, character).map_err(|e| match e {
            StoreError::Missing(_) => ApiError::not_found(format!("no profile store for {character}")),
            other => ApiError::internal(other.to_string()),
        })
    }

    fn programs(&self, character: &str, version: Option<u64>) -> Result<CharacterPrograms, ApiError> {
        let store = self.store(character)?;
        CharacterPrograms::from_store(&store, version).map_err(|e| ApiError::not_found(e.to_string()))
    }
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker panicked: {e}")))?
}

#[derive(Deserialize)]
struct NewSession {
    character: String,
    version: Option<u64>,
}

async fn create_session(State(st): State<Arc<AppState>>, Json(req): Json<NewSession>) -> ApiResult {
    let s = st.clone();
    let programs = blocking(move || s.programs(&req.character, req.version)).await?;
    let id = format!("s{}", st.next_id.fetch_add(1, Ordering::SeqCst));
    let session = ChatSession::new(&id, &programs.character, programs.version, programs.programs);
    st.sessions
        .lock()
        .unwrap()
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    info!(session = %id, character = %programs.character, version = programs.version, "session opened");
    Ok(Json(json!({
        "session_id": id,
        "character": programs.character,
        "version": programs.version,
    })))
}

#[derive(Deserialize)]
struct NewTurn {
    user_text: String,
}

async fn post_turn(State(st): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<NewTurn>) -> ApiResult {
    let session = st.session(&id)?;
    let turn: ChatTurn = blocking(move || {
        let mut s = session.lock().unwrap();
        s.turn(&req.user_text, st.oracle.as_ref(), &st.client, &st.responder)
            .cloned()
            .map_err(|e| {
                if e.is_transport() {
                    ApiError::new(StatusCode::BAD_GATEWAY, e.to_string())
                } else {
                    ApiError::bad_request(e.to_string())
                }
            })
    })
    .await?;
    Ok(Json(serde_json::to_value(turn).unwrap()))
}

fn transcript_json(s: &ChatSession) -> Value {
    json!({
        "session_id": s.id,
        "character": s.character,
        "version": s.version,
        "turns": s.transcript(),
    })
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let session = st.session(&id)?;
    let s = session.lock().unwrap();
    Ok(Json(transcript_json(&s)))
}

async fn close_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let session = st
        .sessions
        .lock()
        .unwrap()
        .remove(&id)
        .ok_or_else(|| ApiError::not_found(format!("no session {id}")))?;
    let path = st.transcripts.join(format!("{id}.jsonl"));
    let s = session.lock().unwrap();
    s.write_transcript(&path)
        .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    let mut body = transcript_json(&s);
    body["transcript_path"] = json!(path.display().to_string());
    Ok(Json(body))
}

async fn list_profiles(State(st): State<Arc<AppState>>) -> ApiResult {
    blocking(move || {
        let mut out = Vec::new();
        for character in VersionStore::list(&st.profiles) {
            let store = st.store(&character)?;
            out.push(json!({
                "character": store.character(),
                "artifact": store.meta().artifact,
                "versions": store.versions().len(),
                "current": store.current().version,
            }));
        }
        Ok(Json(json!({ "profiles": out })))
    })
    .await
}

async fn list_versions(State(st): State<Arc<AppState>>, Path(character): Path<String>) -> ApiResult {
    blocking(move || {
        let store = st.store(&character)?;
        let versions: Vec<Value> = store
            .versions()
            .iter()
            .map(|v| json!({ "version": v.version, "provenance": v.provenance }))
            .collect();
        Ok(Json(json!({
            "character": store.character(),
            "versions": versions,
            "revisions": store.revisions(),
        })))
    })
    .await
}

async fn get_version(State(st): State<Arc<AppState>>, Path((character, n)): Path<(String, u64)>) -> ApiResult {
    blocking(move || {
        let store = st.store(&character)?;
        let v = store
            .version(n)
            .ok_or_else(|| ApiError::not_found(format!("{character} has no version {n}")))?;
        let changed = match n.checked_sub(1).and_then(|p| store.version(p)) {
            Some(prev) => changed_segments(prev, v),
            None => Vec::new(),
        };
        let sources: Vec<Value> = v
            .sources
            .iter()
            .map(|(id, src)| json!({ "segment_id": id, "source": src }))
            .collect();
        Ok(Json(json!({
            "character": store.character(),
            "version": v.version,
            "sources": sources,
            "provenance": v.provenance,
            "changed_segments": changed,
        })))
    })
    .await
}

#[derive(Deserialize)]
struct PreviewScene {
    #[serde(default)]
    id: Option<String>,
    context: String,
    #[serde(default)]
    question: String,
}

#[derive(Deserialize)]
struct Preview {
    character: String,
    version: Option<u64>,
    scene: PreviewScene,
}

async fn preview(State(st): State<Arc<AppState>>, Json(req): Json<Preview>) -> ApiResult {
    blocking(move || {
        if req.scene.context.trim().is_empty() {
            return Err(ApiError::bad_request("scene.context must be non-empty"));
        }
        let programs = st.programs(&req.character, req.version)?;
        let mut scene = Scene::live(
            req.scene.id.unwrap_or_else(|| "preview".into()),
            &programs.character,
            req.scene.context,
        );
        scene.question = req.scene.question;
        let record = respond(
            &scene,
            Mode::Codified,
            &Grounding::codified(&programs.programs, st.oracle.as_ref()),
            &st.responder,
            &st.client,
            0,
        )
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()))?;
        Ok(Json(json!({
            "character": programs.character,
            "version": programs.version,
            "response": record.response,
            "triggered": record.triggered,
            "trace": serde_json::to_value(&record).unwrap()["trace"],
        })))
    })
    .await
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/profiles", get(list_profiles))
        .route("/profiles/{character}/versions", get(list_versions))
        .route("/profiles/{character}/versions/{n}", get(get_version))
        .route("/eval/preview", post(preview))
        .with_state(state)
}

pub fn serve(cfg: &RunConfig, host: &str, port: u16) -> Result<bool> {
    let client = backends::client(cfg)?;
    let oracle = backends::oracle(cfg, &client)?;
    let state = Arc::new(AppState::new(cfg, client, oracle));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(true)
    })
}
