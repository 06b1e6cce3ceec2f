//! HTTP surface of a session: event ingestion, progress and statistics,
//! snapshots, inspection, checkpoint tooling, replay control, and the
//! newline-delimited `/updates` stream.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

use spark_core::checkpoints::{
    suggest_assertions, HeuristicProvider, ProviderError, RemoteProvider, SuggestionProvider, SuggestionRequest,
};
use spark_core::classroom::{
    drive_replay, Classroom, LiveUpdate, LoadedSession, Mode, QueryError, ReplayProgress, ReplayStatus, Verdict,
    HEARTBEAT,
};
use spark_core::evaluator::{classroom_stats, Runner};
use spark_core::event_log::{load_log_file, EditEvent, ReplaySpeed};

pub const TOKEN_HEADER: &str = "x-spark-token";

pub fn wall_clock_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

/// Per-student token bucket for ingestion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLimit {
    pub events_per_second: f64,
    pub burst: f64,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self {
            events_per_second: 100.0,
            burst: 2_000.0,
        }
    }
}

struct Bucket {
    tokens: f64,
    at: Instant,
}

type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub struct ServerOptions {
    pub token: String,
    pub rate_limit: RateLimit,
    pub heartbeat: Duration,
    /// Live-mode time source, epoch milliseconds.
    pub clock: Clock,
    pub provider: Arc<dyn SuggestionProvider>,
}

impl ServerOptions {
    pub fn new(token: impl Into<String>) -> Self {
        let provider: Arc<dyn SuggestionProvider> = match RemoteProvider::from_env() {
            Some(remote) => Arc::new(remote),
            None => Arc::new(HeuristicProvider),
        };
        Self {
            token: token.into(),
            rate_limit: RateLimit::default(),
            heartbeat: HEARTBEAT,
            clock: Arc::new(wall_clock_ms),
            provider,
        }
    }
}

struct ReplayRun {
    progress: Arc<ReplayProgress>,
    log_path: PathBuf,
}

pub struct AppState {
    session: Arc<LoadedSession>,
    runner: Arc<dyn Runner>,
    opts: ServerOptions,
    mode: Mutex<Mode>,
    classroom: RwLock<Arc<Classroom>>,
    updates: broadcast::Sender<LiveUpdate>,
    buckets: Mutex<HashMap<String, Bucket>>,
    replay: Mutex<Option<ReplayRun>>,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState")
            .field("session", &self.session.config.session_id)
            .finish_non_exhaustive()
    }
}

fn attach(classroom: Classroom, tx: &broadcast::Sender<LiveUpdate>) -> Arc<Classroom> {
    let tx = tx.clone();
    Arc::new(classroom.with_listener(move |u| {
        // no subscribers is fine
        let _ = tx.send(u.clone());
    }))
}

impl AppState {
    pub fn new(session: LoadedSession, runner: Arc<dyn Runner>, opts: ServerOptions) -> Result<Arc<Self>, spark_core::classroom::SessionError> {
        let (updates, _) = broadcast::channel(4096);
        let mode = session.config.mode;
        let start = (opts.clock)();
        let classroom = Classroom::for_session(&session, Arc::clone(&runner), start, mode == Mode::Live)?;
        Ok(Arc::new(Self {
            classroom: RwLock::new(attach(classroom, &updates)),
            session: Arc::new(session),
            runner,
            opts,
            mode: Mutex::new(mode),
            updates,
            buckets: Mutex::new(HashMap::new()),
            replay: Mutex::new(None),
        }))
    }

    pub fn classroom(&self) -> Arc<Classroom> {
        Arc::clone(&self.classroom.read().expect("classroom lock poisoned"))
    }

    pub fn mode(&self) -> Mode {
        *self.mode.lock().expect("mode lock poisoned")
    }

    pub fn session(&self) -> &LoadedSession {
        &self.session
    }

    pub fn subscribe(&self) -> broadcast::Receiver<LiveUpdate> {
        self.updates.subscribe()
    }

    /// Current instant: the wall clock when live, the replay cursor (or
    /// session end) when replaying.
    pub fn now_ms(&self) -> i64 {
        match self.mode() {
            Mode::Live => (self.opts.clock)(),
            Mode::Replay => {
                let cursor = self.replay_status().and_then(|s| s.cursor_ms);
                let classroom = self.classroom();
                if self.replay_status().is_some_and(|s| !s.running) {
                    return classroom.end_ms();
                }
                cursor.unwrap_or(classroom.options().start_ms)
            }
        }
    }

    pub fn replay_status(&self) -> Option<ReplayStatus> {
        self.replay
            .lock()
            .expect("replay lock poisoned")
            .as_ref()
            .map(|r| r.progress.status())
    }

    /// Publishes live ticks due by now. No-op while replaying.
    pub fn heartbeat(&self) -> Vec<i64> {
        if self.mode() != Mode::Live {
            return Vec::new();
        }
        self.classroom().advance_to((self.opts.clock)())
    }

    fn admit(&self, student_id: &str) -> bool {
        let limit = self.opts.rate_limit;
        let mut buckets = self.buckets.lock().expect("bucket lock poisoned");
        let now = Instant::now();
        let b = buckets.entry(student_id.to_owned()).or_insert(Bucket {
            tokens: limit.burst,
            at: now,
        });
        b.tokens = (b.tokens + now.duration_since(b.at).as_secs_f64() * limit.events_per_second).min(limit.burst);
        b.at = now;
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    /// Ingests a batch, rate-limited per student. Verdicts are in batch
    /// order.
    pub fn ingest(&self, batch: Vec<EditEvent>) -> Vec<Verdict> {
        let classroom = self.classroom();
        let mut verdicts: Vec<Option<Verdict>> = vec![None; batch.len()];
        let mut admitted = Vec::with_capacity(batch.len());
        let mut slots = Vec::with_capacity(batch.len());
        for (i, e) in batch.into_iter().enumerate() {
            if self.admit(&e.student_id) {
                slots.push(i);
                admitted.push(e);
            } else {
                verdicts[i] = Some(Verdict::Rejected {
                    error: "RateLimited".into(),
                    field: Some("student_id".into()),
                    message: format!("RateLimited: too many events from {}", e.student_id),
                });
            }
        }
        for (i, v) in slots.into_iter().zip(classroom.ingest(admitted)) {
            verdicts[i] = Some(v);
        }
        verdicts.into_iter().map(|v| v.expect("every event judged")).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Upstream(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Upstream(_) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Selector(_) => ApiError::BadRequest(e.to_string()),
            QueryError::NoReference => ApiError::Conflict(e.to_string()),
            _ => ApiError::NotFound(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))
}

async fn require_token(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    let ok = request
        .headers()
        .get(TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v == state.opts.token);
    if ok {
        next.run(request).await
    } else {
        (StatusCode::UNAUTHORIZED, Json(json!({ "error": "missing or wrong X-Spark-Token" }))).into_response()
    }
}

async fn post_events(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Vec<Verdict>>> {
    let batch: Vec<EditEvent> = parse_json(&body)?;
    if state.mode() == Mode::Replay {
        return Err(ApiError::Conflict("session is replaying; live ingestion is disabled".into()));
    }
    Ok(Json(blocking(move || state.ingest(batch)).await?))
}

#[derive(Debug, Deserialize)]
pub struct AtQuery {
    pub t: Option<i64>,
}

async fn get_progress(State(state): State<Arc<AppState>>, Query(q): Query<AtQuery>) -> ApiResult<Response> {
    let classroom = state.classroom();
    let start = classroom.options().start_ms;
    match q.t {
        Some(t) if t < start => Err(ApiError::NotFound(format!("t={t} precedes the session start {start}"))),
        Some(t) => classroom
            .progress_at(t)
            .map(|s| Json(s.as_ref().clone()).into_response())
            .ok_or_else(|| ApiError::NotFound(format!("no tick published at or before {t}"))),
        None if state.mode() == Mode::Live => {
            let now = state.now_ms();
            Ok(Json(blocking(move || classroom.progress_now(now)).await?).into_response())
        }
        None => classroom
            .latest()
            .map(|s| Json(s.as_ref().clone()).into_response())
            .ok_or_else(|| ApiError::NotFound("no tick published yet".into())),
    }
}

async fn get_stats(State(state): State<Arc<AppState>>, Query(q): Query<AtQuery>) -> ApiResult<Response> {
    let classroom = state.classroom();
    let slice = match q.t {
        Some(t) => classroom.progress_at(t),
        None => classroom.latest(),
    }
    .ok_or_else(|| ApiError::NotFound("no tick published at that time".into()))?;
    Ok(Json(classroom_stats(&slice, classroom.checkpoints())).into_response())
}

async fn get_snapshot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AtQuery>,
) -> ApiResult<Response> {
    let t = q.t.unwrap_or_else(|| state.now_ms());
    let classroom = state.classroom();
    Ok(Json(classroom.snapshot(&id, t)?).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InspectBody {
    #[serde(default)]
    pub task_id: Option<String>,
    pub selector: String,
    #[serde(default)]
    pub property: Option<String>,
    #[serde(default)]
    pub t_ms: Option<i64>,
}

async fn post_inspect(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: InspectBody = parse_json(&body)?;
    let t = req.t_ms.unwrap_or_else(|| state.now_ms());
    let classroom = state.classroom();
    let result = blocking(move || {
        classroom.inspect(req.task_id.as_deref(), &req.selector, req.property.as_deref(), t)
    })
    .await??;
    Ok(Json(result).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyBody {
    pub checkpoint_id: String,
}

async fn post_verify(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: VerifyBody = parse_json(&body)?;
    let classroom = state.classroom();
    let report = blocking(move || classroom.verify(&req.checkpoint_id)).await??;
    Ok(Json(report).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SuggestBody {
    pub description: String,
}

async fn post_suggest(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: SuggestBody = parse_json(&body)?;
    let exercise = state.session.exercise.clone();
    let provider = Arc::clone(&state.opts.provider);
    let request = SuggestionRequest {
        description: req.description,
        reference: exercise.reference.unwrap_or(exercise.starter),
    };
    let result = blocking(move || suggest_assertions(&request, provider.as_ref())).await?;
    match result {
        Ok(r) => Ok(Json(r).into_response()),
        Err(e @ ProviderError::Schema(_)) => Err(ApiError::Unprocessable(e.to_string())),
        Err(e @ ProviderError::NotConfigured(_)) => Err(ApiError::Conflict(e.to_string())),
        Err(e @ ProviderError::Remote(_)) => Err(ApiError::Upstream(e.to_string())),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReplayBody {
    pub log_path: PathBuf,
    #[serde(default = "max_speed")]
    pub speed: ReplaySpeed,
}

fn max_speed() -> ReplaySpeed {
    ReplaySpeed::Max
}

/// Switches the session to replay mode and feeds `log_path` through a fresh
/// classroom in the background.
pub fn start_replay(state: &Arc<AppState>, log_path: PathBuf, speed: ReplaySpeed) -> ApiResult<usize> {
    let mut slot = state.replay.lock().expect("replay lock poisoned");
    if slot.as_ref().is_some_and(|r| r.progress.status().running) {
        return Err(ApiError::Conflict("a replay is already running".into()));
    }
    let path = state.session.resolve(&log_path);
    let log = load_log_file(&path).map_err(|e| ApiError::BadRequest(format!("{}: {e}", path.display())))?;
    let view = log.view();
    let first = view.time_span().map_or(state.classroom().options().start_ms, |(s, _)| s);
    let classroom = Classroom::for_session(&state.session, Arc::clone(&state.runner), first, false)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let classroom = attach(classroom, &state.updates);
    *state.mode.lock().expect("mode lock poisoned") = Mode::Replay;
    *state.classroom.write().expect("classroom lock poisoned") = Arc::clone(&classroom);
    let progress = Arc::new(ReplayProgress::new());
    *slot = Some(ReplayRun {
        progress: Arc::clone(&progress),
        log_path: path,
    });
    let events = view.len();
    std::thread::spawn(move || match drive_replay(&classroom, &view, speed, &progress) {
        Ok(r) => tracing::info!(events = r.events_delivered, "replay finished"),
        Err(e) => tracing::warn!(error = %e, "replay aborted"),
    });
    Ok(events)
}

async fn post_replay(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: ReplayBody = parse_json(&body)?;
    let events = start_replay(&state, req.log_path, req.speed)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "events": events }))).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReplayStatusBody {
    pub mode: Mode,
    #[serde(default)]
    pub log_path: Option<PathBuf>,
    #[serde(flatten)]
    pub status: Option<ReplayStatus>,
}

async fn get_replay_status(State(state): State<Arc<AppState>>) -> Json<ReplayStatusBody> {
    let slot = state.replay.lock().expect("replay lock poisoned");
    Json(ReplayStatusBody {
        mode: state.mode(),
        log_path: slot.as_ref().map(|r| r.log_path.clone()),
        status: slot.as_ref().map(|r| r.progress.status()),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub mode: Mode,
    pub session_start_ms: i64,
    pub tick_interval_ms: i64,
    pub now_ms: i64,
    pub ticks: Vec<i64>,
    pub students: Vec<String>,
    pub checkpoints: Vec<spark_core::checkpoints::Checkpoint>,
}

async fn get_session(State(state): State<Arc<AppState>>) -> Json<SessionInfo> {
    let classroom = state.classroom();
    let opts = classroom.options();
    Json(SessionInfo {
        session_id: classroom.session_id().to_owned(),
        mode: state.mode(),
        session_start_ms: opts.start_ms,
        tick_interval_ms: opts.tick_interval_ms,
        now_ms: state.now_ms(),
        ticks: classroom.published_ticks(),
        students: classroom.view().students().map(str::to_owned).collect(),
        checkpoints: classroom.checkpoints().to_vec(),
    })
}

async fn get_updates(State(state): State<Arc<AppState>>) -> Response {
    let rx = state.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(update) => {
                    let mut line = serde_json::to_vec(&update).expect("update serializes");
                    line.push(b'\n');
                    return Some((Ok::<_, std::convert::Infallible>(Bytes::from(line)), rx));
                }
                // a slow reader re-syncs through /progress
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::debug!(skipped = n, "update subscriber lagged");
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let mut response = Response::new(Body::from_stream(stream));
    response
        .headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/x-ndjson"));
    response
}

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/progress", get(get_progress))
        .route("/stats", get(get_stats))
        .route("/students/{id}/snapshot", get(get_snapshot))
        .route("/inspect", post(post_inspect))
        .route("/checkpoints/verify", post(post_verify))
        .route("/checkpoints/suggest", post(post_suggest))
        .route("/replay", post(post_replay))
        .route("/replay/status", get(get_replay_status))
        .route("/session", get(get_session))
        .route("/updates", get(get_updates))
        .route_layer(middleware::from_fn_with_state(Arc::clone(&state), require_token));
    Router::new()
        .route("/events", post(post_events))
        .merge(protected)
        .with_state(state)
}

/// Publishes live ticks on a timer until the state is dropped.
pub fn spawn_heartbeat(state: &Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let weak = Arc::downgrade(state);
    let period = state.opts.heartbeat;
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            interval.tick().await;
            let Some(state) = weak.upgrade() else { break };
            let published = tokio::task::spawn_blocking(move || state.heartbeat()).await;
            if let Ok(ticks) = published {
                for t in ticks {
                    tracing::info!(t_ms = t, "tick published");
                }
            }
        }
    })
}

/// Serves `state` on `listener` until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let heartbeat = spawn_heartbeat(&state);
    let result = axum::serve(listener, router(state)).await;
    heartbeat.abort();
    result
}
