//! Local HTTP front end for the tapfit engine, used by the demo keyboard.
//!
//! | method | path                     | body                         | reply           |
//! |--------|--------------------------|------------------------------|-----------------|
//! | GET    | `/layout`                |                              | layout document |
//! | POST   | `/sessions`              | [`CreateSession`] (optional) | [`SessionInfo`] |
//! | POST   | `/sessions/{id}/decode`  | [`DecodeRequest`]            | `DecodeResult`  |
//! | POST   | `/sessions/{id}/commit`  | [`CommitRequest`]            | [`CommitReply`] |
//! | GET    | `/sessions/{id}/model`   |                              | [`ModelReply`]  |
//! | POST   | `/sessions/{id}/config`  | [`ConfigRequest`]            | [`ConfigReply`] |
//! | GET    | `/sessions/{id}/profile` |                              | profile document|
//!
//! Errors come back as `{"error": "..."}` with status 404 for an unknown
//! session and 400 for a bad request.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tapfit::engine::EngineCounters;
use tapfit::spatial_model::ModelDump;
use tapfit::touch_store::ProfileDoc;
use tapfit::{
    DecodeResult, Decoder, Engine, EngineConfig, SpatialParams, TouchHistory, TouchPoint,
};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("{0}")]
    BadRequest(String),
}

impl From<tapfit::Error> for ServiceError {
    fn from(e: tapfit::Error) -> Self {
        ServiceError::BadRequest(e.to_string())
    }
}

impl From<JsonRejection> for ServiceError {
    fn from(e: JsonRejection) -> Self {
        ServiceError::BadRequest(e.body_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
        };
        (
            status,
            Json(ErrorReply {
                error: self.to_string(),
            }),
        )
            .into_response()
    }
}

type Reply<T> = Result<Json<T>, ServiceError>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    /// Overrides the server's default engine configuration.
    pub config: Option<EngineConfig>,
    /// Resume from a saved profile.
    pub profile: Option<ProfileDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session: String,
    pub config: EngineConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeRequest {
    pub touches: Vec<TouchPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitRequest {
    pub word: String,
    pub touches: Vec<TouchPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitReply {
    pub trained: usize,
    pub skipped: usize,
    pub rebuilt: bool,
    pub commits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReply {
    pub model: ModelDump,
    pub counters: EngineCounters,
    pub total_touches: usize,
    pub max_clusters: usize,
}

/// Partial update of the scoring parameters; absent fields keep their value.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigRequest {
    pub sigma0: Option<f64>,
    pub substitution_cost: Option<f64>,
    pub insertion_cost: Option<f64>,
    pub deletion_cost: Option<f64>,
    pub transposition_cost: Option<f64>,
    pub covariance_enabled: Option<bool>,
}

impl ConfigRequest {
    pub fn apply(&self, p: SpatialParams) -> SpatialParams {
        SpatialParams {
            sigma0: self.sigma0.unwrap_or(p.sigma0),
            substitution_cost: self.substitution_cost.unwrap_or(p.substitution_cost),
            insertion_cost: self.insertion_cost.unwrap_or(p.insertion_cost),
            deletion_cost: self.deletion_cost.unwrap_or(p.deletion_cost),
            transposition_cost: self.transposition_cost.unwrap_or(p.transposition_cost),
            covariance_enabled: self.covariance_enabled.unwrap_or(p.covariance_enabled),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigReply {
    pub params: SpatialParams,
    pub rebuilt: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct LayoutQuery {
    pub session: Option<String>,
}

/// Shared server state. Each session sits behind its own lock, so writes to
/// one session are serialized while other sessions proceed.
pub struct AppState {
    decoder: Arc<Decoder>,
    layout_doc: String,
    defaults: EngineConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Engine>>>>,
    next_id: AtomicU64,
}

impl AppState {
    /// `layout_doc` is served verbatim from `GET /layout` and must describe
    /// the decoder's layout.
    pub fn new(
        decoder: Arc<Decoder>,
        layout_doc: impl Into<String>,
        defaults: EngineConfig,
    ) -> tapfit::Result<Self> {
        defaults.validate()?;
        let layout_doc = layout_doc.into();
        let parsed = tapfit::KeyboardLayout::from_json(&layout_doc)?;
        if parsed.keys() != decoder.layout().keys() {
            return Err(tapfit::Error::InvalidConfig(
                "layout document does not match the decoder".into(),
            ));
        }
        Ok(Self {
            decoder,
            layout_doc,
            defaults,
            sessions: RwLock::default(),
            next_id: AtomicU64::new(1),
        })
    }

    /// QWERTY with the shipped lexicon.
    pub fn english(defaults: EngineConfig) -> tapfit::Result<Self> {
        let decoder = Decoder::new(
            tapfit::KeyboardLayout::qwerty(),
            tapfit::LanguageModel::english(),
        );
        Self::new(Arc::new(decoder), tapfit::layout::QWERTY_JSON, defaults)
    }

    pub fn decoder(&self) -> &Arc<Decoder> {
        &self.decoder
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Engine>>, ServiceError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn create(&self, req: CreateSession) -> Result<SessionInfo, ServiceError> {
        let config = req.config.unwrap_or_else(|| self.defaults.clone());
        let engine = match req.profile {
            Some(p) => Engine::with_history(
                Arc::clone(&self.decoder),
                config,
                TouchHistory::from_profile(p)?,
            )?,
            None => Engine::new(Arc::clone(&self.decoder), config)?,
        };
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let info = SessionInfo {
            session: id.clone(),
            config: engine.config().clone(),
        };
        self.sessions
            .write()
            .expect("session table lock")
            .insert(id, Arc::new(Mutex::new(engine)));
        Ok(info)
    }
}

fn lock(e: &Mutex<Engine>) -> std::sync::MutexGuard<'_, Engine> {
    e.lock().unwrap_or_else(|p| p.into_inner())
}

fn check_touches(touches: &[TouchPoint]) -> Result<(), ServiceError> {
    if touches.is_empty() {
        return Err(ServiceError::BadRequest("touches must not be empty".into()));
    }
    if !touches.iter().all(TouchPoint::is_finite) {
        return Err(ServiceError::BadRequest(
            "touch coordinates must be finite".into(),
        ));
    }
    Ok(())
}

async fn get_layout(
    State(s): State<Arc<AppState>>,
    Query(q): Query<LayoutQuery>,
) -> Result<Response, ServiceError> {
    if let Some(id) = &q.session {
        s.session(id)?;
    }
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        s.layout_doc.clone(),
    )
        .into_response())
}

async fn create_session(
    State(s): State<Arc<AppState>>,
    body: Option<Json<CreateSession>>,
) -> Reply<SessionInfo> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    Ok(Json(s.create(req)?))
}

async fn decode(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<DecodeRequest>, JsonRejection>,
) -> Reply<DecodeResult> {
    let engine = s.session(&id)?;
    let Json(req) = body?;
    check_touches(&req.touches)?;
    // Snapshot under the lock, decode outside it.
    let (model, config) = {
        let e = lock(&engine);
        (e.model(), e.config().clone())
    };
    Ok(Json(s.decoder.decode(
        &req.touches,
        &model,
        &config.params,
        &config.beam,
        &config.autocorrect,
    )))
}

async fn commit(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<CommitRequest>, JsonRejection>,
) -> Reply<CommitReply> {
    let engine = s.session(&id)?;
    let Json(req) = body?;
    if req.word.is_empty() {
        return Err(ServiceError::BadRequest("word must not be empty".into()));
    }
    if !req.touches.iter().all(TouchPoint::is_finite) {
        return Err(ServiceError::BadRequest(
            "touch coordinates must be finite".into(),
        ));
    }
    let mut e = lock(&engine);
    let out = e.commit(&req.word, &req.touches);
    Ok(Json(CommitReply {
        trained: out.trained,
        skipped: out.skipped,
        rebuilt: out.rebuilt,
        commits: e.counters().commits,
    }))
}

async fn model(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Reply<ModelReply> {
    let engine = s.session(&id)?;
    let e = lock(&engine);
    Ok(Json(ModelReply {
        model: e.model().dump(&e.config().params),
        counters: e.counters(),
        total_touches: e.history().total_touches(),
        max_clusters: e.config().clusters.k,
    }))
}

async fn config(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ConfigRequest>, JsonRejection>,
) -> Reply<ConfigReply> {
    let engine = s.session(&id)?;
    let Json(req) = body?;
    let mut e = lock(&engine);
    let params = req.apply(e.config().params);
    let rebuilt = e.set_params(params)?;
    Ok(Json(ConfigReply { params, rebuilt }))
}

async fn profile(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Reply<ProfileDoc> {
    let engine = s.session(&id)?;
    let e = lock(&engine);
    Ok(Json(e.history().to_profile()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/layout", get(get_layout))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/decode", post(decode))
        .route("/sessions/{id}/commit", post(commit))
        .route("/sessions/{id}/model", get(model))
        .route("/sessions/{id}/config", post(config))
        .route("/sessions/{id}/profile", get(profile))
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
