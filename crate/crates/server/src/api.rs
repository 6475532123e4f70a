//! The `/v1` session service.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cardiac_core::agent::{Agent, AgentMessage, Artifact, SessionState, SessionStore, Watermark};
use cardiac_core::report::ArtifactId;
use cardiac_core::backends::StudyPayload;
use cardiac_core::agent::Event;
use cardiac_core::volume::{CineVolume, DeskHeader, SequenceKind};
use serde::Deserialize;
use serde_json::{json, Value};
use tracing::info;

use crate::{ApiError, ServiceError};

struct Live {
    state: SessionState,
    mark: Watermark,
}

pub struct AppState {
    agent: Arc<Agent>,
    store: SessionStore,
    /// One mutex per loaded session; turns on a session run one at a time.
    sessions: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
}

impl AppState {
    /// Opens the data root, which must be a writable directory.
    pub fn new(agent: Agent, data_root: &Path) -> Result<Arc<Self>, ServiceError> {
        let store = SessionStore::open(data_root).map_err(|e| ServiceError::DataRoot(e.to_string()))?;
        let probe = data_root.join(".write-probe");
        std::fs::write(&probe, b"").map_err(|e| ServiceError::DataRoot(format!("{} is not writable: {e}", data_root.display())))?;
        let _ = std::fs::remove_file(&probe);
        Ok(Arc::new(AppState {
            agent: Arc::new(agent),
            store,
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Live>>, ApiError> {
        let mut map = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        if !self.store.exists(id) {
            return Err(ApiError::not_found("session_not_found", &format!("session `{id}`")));
        }
        let state = self.store.load(id).map_err(|e| ApiError::internal(e.to_string()))?;
        let mark = Watermark::of(&state);
        let live = Arc::new(Mutex::new(Live { state, mark }));
        map.insert(id.to_string(), live.clone());
        Ok(live)
    }

    /// Runs `f` on the locked session and persists what it appended. On a
    /// storage failure the cached copy is dropped so the next request
    /// reloads the last persisted state.
    fn mutate<T>(&self, id: &str, f: impl FnOnce(&Agent, &mut SessionState) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let live = self.session(id)?;
        let mut guard = live.lock().unwrap_or_else(|p| p.into_inner());
        let out = f(&self.agent, &mut guard.state);
        let mark = guard.mark;
        match self.store.save(&guard.state, mark) {
            Ok(m) => guard.mark = m,
            Err(e) => {
                self.sessions.lock().unwrap_or_else(|p| p.into_inner()).remove(id);
                return Err(ApiError::internal(e.to_string()));
            }
        }
        out
    }

    fn read<T>(&self, id: &str, f: impl FnOnce(&SessionState) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let live = self.session(id)?;
        let guard = live.lock().unwrap_or_else(|p| p.into_inner());
        f(&guard.state)
    }

    pub fn create_session(&self) -> Result<String, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let state = self.store.create(&id).map_err(|e| ApiError::internal(e.to_string()))?;
        let mark = Watermark::of(&state);
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::new(Mutex::new(Live { state, mark })));
        info!(session = %id, "session created");
        Ok(id)
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn healthz(State(app): State<Arc<AppState>>) -> Json<Value> {
    let backends: Vec<&str> = app.agent.backends().iter().map(|b| b.descriptor().name.as_str()).collect();
    Json(json!({
        "status": "ok",
        "tools": app.agent.registry().len(),
        "backends": backends,
        "documents": app.agent.knowledge().len(),
    }))
}

async fn create_session(State(app): State<Arc<AppState>>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let id = blocking(move || app.create_session()).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let ids = blocking(move || app.store.list().map_err(|e| ApiError::internal(e.to_string()))).await?;
    Ok(Json(json!({ "sessions": ids })))
}

fn artifact_list(s: &SessionState) -> Vec<Value> {
    let mut seen = BTreeSet::new();
    s.log()
        .iter()
        .filter(|id| seen.insert(*id))
        .map(|id| {
            let a = s.artifact(id).expect("logged artifact exists");
            json!({"id": id, "type": a.type_name(), "summary": a.summary()})
        })
        .collect()
}

async fn get_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        app.read(&id, |s| {
            let studies: Vec<Value> = s
                .available_sequences()
                .into_iter()
                .map(|k| json!({"kind": k, "study_id": s.study(k).expect("listed").0}))
                .collect();
            Ok(Json(json!({
                "session_id": s.id,
                "studies": studies,
                "artifacts": artifact_list(s),
                "turns": s.next_turn(),
            })))
        })
    })
    .await
}

#[derive(Deserialize)]
struct JsonStudy {
    kind: Option<SequenceKind>,
    header: DeskHeader,
    data_b64: String,
}

fn invalid(m: String) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_study", m)
}

async fn read_upload(req: Request) -> Result<(Option<SequenceKind>, CineVolume), ApiError> {
    let ctype = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();
    let malformed = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "malformed_study", m);
    if ctype.starts_with("multipart/form-data") {
        let mut mp = Multipart::from_request(req, &()).await.map_err(|e| malformed(e.to_string()))?;
        let (mut kind, mut head, mut payload) = (None, None, None);
        while let Some(field) = mp.next_field().await.map_err(|e| malformed(e.to_string()))? {
            let name = field.name().unwrap_or("").to_string();
            let bytes: Bytes = field.bytes().await.map_err(|e| malformed(e.to_string()))?;
            match name.as_str() {
                "kind" => {
                    let k = String::from_utf8_lossy(&bytes).trim().to_string();
                    kind = Some(serde_json::from_value(Value::String(k.clone())).map_err(|_| malformed(format!("unknown sequence kind `{k}`")))?);
                }
                "header" => head = Some(serde_json::from_slice::<DeskHeader>(&bytes).map_err(|e| malformed(format!("header: {e}")))?),
                "payload" => payload = Some(bytes.to_vec()),
                other => return Err(malformed(format!("unexpected field `{other}`"))),
            }
        }
        let head = head.ok_or_else(|| malformed("missing `header` field".into()))?;
        let payload = payload.ok_or_else(|| malformed("missing `payload` field".into()))?;
        Ok((kind, head.decode(&payload).map_err(|e| invalid(e.to_string()))?))
    } else {
        let Json(body) = Json::<JsonStudy>::from_request(req, &()).await.map_err(|e| malformed(e.body_text()))?;
        let volume = StudyPayload::Inline { header: body.header, data_b64: body.data_b64 }
            .resolve(None)
            .map_err(|e| invalid(e.to_string()))?;
        Ok((body.kind, volume))
    }
}

async fn upload_study(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, req: Request) -> Result<Response, ApiError> {
    // The body is consumed before the session lookup so that clients
    // streaming a large upload still receive the error response.
    let (declared, volume) = read_upload(req).await?;
    if let Some(k) = declared {
        if k != volume.kind() {
            return Err(invalid(format!("declared kind {k} does not match header kind {}", volume.kind())));
        }
    }
    let (study_id, kind, dims) = blocking(move || {
        app.mutate(&id, |_, s| {
            let kind = volume.kind();
            let dims = volume.dims();
            let sid = s.add_study(volume).map_err(|e| invalid(e.to_string()).with_detail(json!({ "kind": kind })))?;
            Ok((sid, kind, dims))
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({"study_id": study_id, "kind": kind, "dims": dims}))).into_response())
}

#[derive(Deserialize)]
struct PostMessage {
    text: String,
    #[serde(default)]
    image_refs: Vec<ArtifactId>,
}

async fn post_message(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Json(body): Json<PostMessage>) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        app.mutate(&id, |agent, s| {
            let before = s.log().len();
            let records = agent.run_turn(s, AgentMessage::user(body.text).with_images(body.image_refs))?;
            let mut seen = BTreeSet::new();
            let created: Vec<&ArtifactId> = s.log()[before..].iter().filter(|a| seen.insert(*a)).collect();
            let answer = records.iter().rev().find_map(|r| match &r.event {
                Event::Answer { message } => Some(message.text.clone()),
                _ => None,
            });
            Ok(Json(json!({
                "turn": records.first().map(|r| r.turn),
                "records": records,
                "artifacts": created,
                "answer": answer,
            })))
        })
    })
    .await
}

#[derive(Deserialize)]
struct TranscriptQuery {
    #[serde(default)]
    since: u64,
}

async fn get_transcript(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Query(q): Query<TranscriptQuery>) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        app.read(&id, |s| {
            let records: Vec<_> = s.transcript().iter().filter(|r| r.seq >= q.since).collect();
            Ok(Json(json!({ "session_id": s.id, "records": records })))
        })
    })
    .await
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_report(State(app): State<Arc<AppState>>, UrlPath((id, rid)): UrlPath<(String, String)>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    blocking(move || {
        app.read(&id, |s| {
            let r = s.report(&rid).ok_or_else(|| ApiError::not_found("report_not_found", &format!("report `{rid}`")))?;
            match q.format.as_deref().unwrap_or("text") {
                "text" => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], r.text.clone()).into_response()),
                "json" => Ok(Json(serde_json::to_value(&r.report).expect("report serializes")).into_response()),
                other => Err(ApiError::bad_request(format!("unknown format `{other}`; use text or json"))),
            }
        })
    })
    .await
}

async fn get_artifact(State(app): State<Arc<AppState>>, UrlPath((id, aid)): UrlPath<(String, String)>) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        app.read(&id, |s| {
            let a = s.artifact(&aid).ok_or_else(|| ApiError::not_found("artifact_not_found", &format!("artifact `{aid}`")))?;
            let body = match a {
                Artifact::Study(v) => serde_json::to_value(DeskHeader::for_volume(v, "")).expect("header serializes"),
                Artifact::Masks { source, masks } => json!({"source": source, "kind": masks.first().map(|m| m.kind()), "phases": masks.len()}),
                Artifact::Bullseye(b) => serde_json::to_value(b.export()).expect("document serializes"),
                other => other.json_body().expect("json artifact"),
            };
            Ok(Json(json!({"id": aid, "type": a.type_name(), "body": body})))
        })
    })
    .await
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/studies", post(upload_study))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/sessions/{id}/transcript", get(get_transcript))
        .route("/v1/sessions/{id}/reports/{rid}", get(get_report))
        .route("/v1/sessions/{id}/artifacts/{aid}", get(get_artifact))
        .layer(axum::extract::DefaultBodyLimit::max(1 << 30))
        .with_state(app)
}

/// Binds `listen` and serves until ctrl-c.
pub async fn serve(app: Arc<AppState>, listen: &str) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
