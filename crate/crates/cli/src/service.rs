//! HTTP practice service: sign library, attempt submission and verdicts.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::{bail, Context, Result};
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use signtutor_core::ingest::{SignCatalog, SignEntry};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use crate::recognize::{AttemptInput, Outcome, Recognizer};
use crate::store::{Attempt, AttemptStatus, AttemptStore};

/// Uploaded frame archives can be large.
const BODY_LIMIT: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub port: u16,
    pub workers: usize,
    /// Directory of reference clips served under `/clips/`.
    pub clips: Option<PathBuf>,
    /// Attempt log; `None` keeps attempts in memory only.
    pub store: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            workers: 2,
            clips: None,
            store: None,
        }
    }
}

pub struct AppState {
    recognizer: Arc<Recognizer>,
    catalog: SignCatalog,
    clips: Option<PathBuf>,
    attempts: RwLock<HashMap<String, Attempt>>,
    store: Mutex<AttemptStore>,
    workers: Arc<Semaphore>,
    n_workers: usize,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(recognizer: Recognizer, catalog: SignCatalog, cfg: &ServiceConfig) -> Result<Arc<Self>> {
        if cfg.workers == 0 {
            bail!("at least one worker is required");
        }
        if let Some(dir) = &cfg.clips {
            if !dir.is_dir() {
                bail!("clip directory {} does not exist", dir.display());
            }
        }
        catalog.validate()?;
        let (mut store, mut attempts) = match &cfg.store {
            Some(p) => AttemptStore::open(p)?,
            None => (AttemptStore::in_memory(), HashMap::new()),
        };
        // work in flight when the previous process stopped is lost
        for a in attempts.values_mut().filter(|a| a.status != AttemptStatus::Done) {
            a.complete(Outcome::failure("service restarted before the attempt was processed".into()));
            store.append(a)?;
        }
        let next = attempts.len() as u64 + 1;
        Ok(Arc::new(Self {
            recognizer: Arc::new(recognizer),
            catalog,
            clips: cfg.clips.clone(),
            attempts: RwLock::new(attempts),
            store: Mutex::new(store),
            workers: Arc::new(Semaphore::new(cfg.workers)),
            n_workers: cfg.workers,
            next_id: AtomicU64::new(next),
        }))
    }

    fn fresh_id(&self) -> String {
        let attempts = self.attempts.read().expect("attempt map poisoned");
        loop {
            let id = format!("att-{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
            if !attempts.contains_key(&id) {
                return id;
            }
        }
    }

    fn record(&self, attempt: Attempt) {
        if let Err(e) = self.store.lock().expect("store poisoned").append(&attempt) {
            eprintln!("warning: could not persist attempt {}: {e:#}", attempt.id);
        }
        self.attempts
            .write()
            .expect("attempt map poisoned")
            .insert(attempt.id.clone(), attempt);
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Attempt)) {
        let changed = {
            let mut map = self.attempts.write().expect("attempt map poisoned");
            let Some(a) = map.get_mut(id) else { return };
            f(a);
            a.clone()
        };
        self.record(changed);
    }

    pub fn attempt(&self, id: &str) -> Option<Attempt> {
        self.attempts.read().expect("attempt map poisoned").get(id).cloned()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut r = Router::new()
        .route("/api/health", get(health))
        .route("/api/signs", get(list_signs))
        .route("/api/signs/{id}", get(get_sign))
        .route("/api/attempts", post(submit_attempt))
        .route("/api/attempts/{id}", get(get_attempt));
    if let Some(dir) = &state.clips {
        r = r.nest_service("/clips", ServeDir::new(dir));
    }
    r.layer(DefaultBodyLimit::max(BODY_LIMIT)).with_state(state)
}

pub async fn serve(state: Arc<AppState>, port: u16) -> Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding port {port}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

#[derive(Serialize)]
struct SignView<'a> {
    #[serde(flatten)]
    entry: &'a SignEntry,
    clip_url: Option<String>,
    /// A model exists for this sign.
    trained: bool,
}

impl AppState {
    fn view<'a>(&self, entry: &'a SignEntry) -> SignView<'a> {
        SignView {
            entry,
            clip_url: entry
                .clip
                .as_ref()
                .filter(|_| self.clips.is_some())
                .map(|c| format!("/clips/{c}")),
            trained: self.recognizer.knows(&entry.id),
        }
    }
}

async fn health(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let attempts = s.attempts.read().expect("attempt map poisoned").len();
    Json(json!({
        "status": "ok",
        "signs": s.catalog.signs.len(),
        "models": s.recognizer.banks.ids().len(),
        "attempts": attempts,
        "workers": s.n_workers,
    }))
}

async fn list_signs(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let signs: Vec<SignView> = s.catalog.signs.iter().map(|e| s.view(e)).collect();
    Json(json!({ "signs": signs }))
}

async fn get_sign(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = s
        .catalog
        .get(&id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown sign {id:?}")))?;
    Ok(Json(s.view(entry)).into_response())
}

async fn get_attempt(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Attempt>, ApiError> {
    s.attempt(&id)
        .map(Json)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown attempt {id:?}")))
}

/// Multipart fields: `target` (sign id) and one of `features` (feature
/// file) or `frames` (tar archive of a sequence directory).
async fn submit_attempt(State(s): State<Arc<AppState>>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut target = None;
    let mut input = None;
    while let Some(field) = form.next_field().await.map_err(|e| bad_request(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| bad_request(e.body_text()))?;
        match name.as_str() {
            "target" => {
                target = Some(String::from_utf8(data.to_vec()).map_err(|_| bad_request("target is not UTF-8"))?)
            }
            "features" => {
                let text = String::from_utf8(data.to_vec()).map_err(|_| bad_request("feature file is not UTF-8"))?;
                input = Some(AttemptInput::Features(text));
            }
            "frames" => input = Some(AttemptInput::FramesArchive(data.to_vec())),
            _ => {}
        }
    }
    let target = target.map(|t| t.trim().to_string()).ok_or_else(|| bad_request("missing field `target`"))?;
    let input = input.ok_or_else(|| bad_request("missing field `features` or `frames`"))?;
    if !s.recognizer.knows(&target) {
        return Err(bad_request(format!("no trained model for sign {target:?}")));
    }

    let id = s.fresh_id();
    s.record(Attempt::new(id.clone(), target.clone(), input.kind()));
    tokio::spawn(process(s.clone(), id.clone(), target, input));

    let location = format!("/api/attempts/{id}");
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, location.clone())],
        Json(json!({ "id": id, "status": AttemptStatus::Queued, "url": location })),
    )
        .into_response())
}

async fn process(s: Arc<AppState>, id: String, target: String, input: AttemptInput) {
    let _permit = s.workers.clone().acquire_owned().await.expect("worker pool closed");
    s.update(&id, |a| a.status = AttemptStatus::Processing);
    let rec = s.recognizer.clone();
    let outcome = tokio::task::spawn_blocking(move || rec.recognize(&target, &input))
        .await
        .unwrap_or_else(|e| Outcome::failure(format!("pipeline crashed: {e}")));
    s.update(&id, |a| a.complete(outcome));
}
