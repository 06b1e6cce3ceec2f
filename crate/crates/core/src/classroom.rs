//! A running session: ingestion, tick publication, and the queries the
//! service layer exposes.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoints::{
    parse_checkpoint_config, verify_checkpoint, Checkpoint, ConfigDiagnostic, ConfigError, Task,
    VerificationReport,
};
use crate::document_store::{
    active_file, load_workspace, reconstruct_at, ActiveFileMarker, DocumentSnapshot, FileMap,
    SessionBounds, MINUTE_MS,
};
use crate::dom::selector::SelectorError;
use crate::evaluator::{
    build_progress_matrix, classroom_stats, row_errors, ClassroomStats, OutcomeMemo,
    ProgressMatrix, ProtocolError, ProtocolRunner, Runner, StaticRunner, TickSlice,
};
use crate::event_log::{
    replay, validate_event, DurableLog, EditEvent, EventSink, FileStorage, LogError, LogView,
    ReplayClock, ReplayError, ReplayReport, ReplaySpeed, SinkError, StreamState,
};
use crate::inspector::{inspect_property, preview_clusters, ClusterSet, PropertyDistribution};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Live,
    Replay,
}

fn default_tick_interval() -> i64 {
    MINUTE_MS
}

/// Session file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub session_id: String,
    pub starter_dir: PathBuf,
    pub checkpoints: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_dir: Option<PathBuf>,
    #[serde(default = "default_tick_interval")]
    pub tick_interval_ms: i64,
    #[serde(default)]
    pub mode: Mode,
    /// Tick anchor. Defaults to server start (live) or the first logged
    /// event (replay).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_start_ms: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_end_ms: Option<i64>,
    /// Live events are also appended here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_path: Option<PathBuf>,
    /// Out-of-process runner: a command line, or `host:port` to connect to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner_command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner_addr: Option<String>,
}

impl SessionConfig {
    pub fn new(session_id: impl Into<String>, starter_dir: impl Into<PathBuf>, checkpoints: impl Into<PathBuf>) -> Self {
        Self {
            session_id: session_id.into(),
            starter_dir: starter_dir.into(),
            checkpoints: checkpoints.into(),
            reference_dir: None,
            tick_interval_ms: MINUTE_MS,
            mode: Mode::Live,
            session_start_ms: None,
            session_end_ms: None,
            log_path: None,
            runner_command: None,
            runner_addr: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid session file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Checkpoints(#[from] ConfigError),
    #[error("invalid session: {0}")]
    Invalid(String),
    #[error("runner unavailable: {0}")]
    Runner(#[from] ProtocolError),
}

/// Starter, reference, and checkpoints of one exercise.
#[derive(Debug, Clone)]
pub struct Exercise {
    pub starter: FileMap,
    pub reference: Option<FileMap>,
    pub checkpoints: Vec<Checkpoint>,
    pub diagnostics: Vec<ConfigDiagnostic>,
}

#[derive(Debug, Clone)]
pub struct LoadedSession {
    pub config: SessionConfig,
    pub base_dir: PathBuf,
    pub exercise: Exercise,
}

fn read(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path).map_err(|source| SessionError::Io {
        path: path.to_owned(),
        source,
    })
}

fn workspace(path: &Path) -> Result<FileMap, SessionError> {
    if !path.is_dir() {
        return Err(SessionError::Io {
            path: path.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    load_workspace(path).map_err(|source| SessionError::Io {
        path: path.to_owned(),
        source,
    })
}

impl LoadedSession {
    /// Reads the session file and everything it references.
    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = read(path)?;
        let config: SessionConfig = serde_json::from_str(&text).map_err(|e| SessionError::Format {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::from_config(config, base_dir)
    }

    pub fn from_config(config: SessionConfig, base_dir: PathBuf) -> Result<Self, SessionError> {
        if config.session_id.is_empty() {
            return Err(SessionError::Invalid("session_id is empty".into()));
        }
        if config.tick_interval_ms <= 0 {
            return Err(SessionError::Invalid(format!(
                "tick_interval_ms must be positive, got {}",
                config.tick_interval_ms
            )));
        }
        if let (Some(s), Some(e)) = (config.session_start_ms, config.session_end_ms) {
            if e < s {
                return Err(SessionError::Invalid(format!("session ends ({e}) before it starts ({s})")));
            }
        }
        let starter = workspace(&base_dir.join(&config.starter_dir))?;
        let reference = match &config.reference_dir {
            Some(dir) => Some(workspace(&base_dir.join(dir))?),
            None => None,
        };
        let parsed = parse_checkpoint_config(&read(&base_dir.join(&config.checkpoints))?)?;
        Ok(Self {
            exercise: Exercise {
                starter,
                reference,
                checkpoints: parsed.checkpoints,
                diagnostics: parsed.diagnostics,
            },
            config,
            base_dir,
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    /// The configured out-of-process runner, else the static one.
    pub fn runner(&self) -> Result<Arc<dyn Runner>, SessionError> {
        if let Some(argv) = &self.config.runner_command {
            let (program, args) = argv
                .split_first()
                .ok_or_else(|| SessionError::Invalid("runner_command is empty".into()))?;
            let mut cmd = std::process::Command::new(program);
            cmd.args(args).current_dir(&self.base_dir);
            return Ok(Arc::new(ProtocolRunner::spawn(&mut cmd, ProtocolRunner::DEFAULT_TIMEOUT)?));
        }
        if let Some(addr) = &self.config.runner_addr {
            return Ok(Arc::new(ProtocolRunner::connect(addr.as_str(), ProtocolRunner::DEFAULT_TIMEOUT)?));
        }
        Ok(Arc::new(StaticRunner))
    }
}

/// Pushed to live subscribers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LiveUpdate {
    StudentEdited {
        student_id: String,
        file_path: String,
        t_ms: i64,
    },
    TickReady {
        t_ms: i64,
        slice_hash: String,
    },
    StatsChanged {
        t_ms: i64,
    },
}

/// Per-event ingestion result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected {
        error: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        field: Option<String>,
        message: String,
    },
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

fn log_error_verdict(e: &LogError) -> Verdict {
    let error = match e {
        LogError::Conflict { .. } => "ConflictError",
        LogError::Storage(_) => "StorageError",
    };
    Verdict::Rejected {
        error: error.into(),
        field: None,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassroomOptions {
    pub start_ms: i64,
    pub end_ms: Option<i64>,
    pub tick_interval_ms: i64,
    pub exec: Execution,
}

impl ClassroomOptions {
    pub fn new(start_ms: i64) -> Self {
        Self {
            start_ms,
            end_ms: None,
            tick_interval_ms: MINUTE_MS,
            exec: Execution::default(),
        }
    }
}

struct IngestState {
    log: DurableLog,
    streams: StreamState,
    /// Ticks published or being computed.
    claimed: BTreeSet<i64>,
    /// Claimed ticks a late event invalidated.
    dirty: BTreeSet<i64>,
    /// Next grid tick not yet claimed.
    next_grid: i64,
    last_event_ms: Option<i64>,
}

#[derive(Debug, Default)]
struct Published {
    slices: std::collections::BTreeMap<i64, Arc<TickSlice>>,
}

/// Student code at one instant as served to the dashboard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotView {
    pub student_id: String,
    pub t_ms: i64,
    pub files: FileMap,
    pub content_hash: String,
    pub active_file: Option<ActiveFileMarker>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InspectResult {
    Distribution(PropertyDistribution),
    Clusters(ClusterSet),
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("unknown student {0:?}")]
    UnknownStudent(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown checkpoint {0:?}")]
    UnknownCheckpoint(String),
    #[error("no reference workspace configured")]
    NoReference,
    #[error(transparent)]
    Selector(#[from] SelectorError),
}

/// Properties fingerprinted when no checkpoint names any.
pub const DEFAULT_PREVIEW_PROPERTIES: [&str; 7] = [
    "background-color",
    "color",
    "display",
    "font-size",
    "font-weight",
    "height",
    "width",
];

type Listener = Box<dyn Fn(&LiveUpdate) + Send + Sync>;

pub struct Classroom {
    session_id: String,
    exercise: Arc<Exercise>,
    opts: ClassroomOptions,
    runner: Arc<dyn Runner>,
    memo: OutcomeMemo,
    ingest: Mutex<IngestState>,
    publish: Mutex<()>,
    published: RwLock<Arc<Published>>,
    listener: Option<Listener>,
}

impl std::fmt::Debug for Classroom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Classroom")
            .field("session_id", &self.session_id)
            .field("opts", &self.opts)
            .finish_non_exhaustive()
    }
}

impl Classroom {
    pub fn new(
        session_id: impl Into<String>,
        exercise: Arc<Exercise>,
        runner: Arc<dyn Runner>,
        opts: ClassroomOptions,
        log: DurableLog,
    ) -> Self {
        assert!(opts.tick_interval_ms > 0, "tick interval must be positive");
        Self {
            session_id: session_id.into(),
            exercise,
            opts,
            runner,
            memo: OutcomeMemo::new(),
            ingest: Mutex::new(IngestState {
                log,
                streams: StreamState::new(),
                claimed: BTreeSet::new(),
                dirty: BTreeSet::new(),
                next_grid: opts.start_ms,
                last_event_ms: None,
            }),
            publish: Mutex::new(()),
            published: RwLock::new(Arc::new(Published::default())),
            listener: None,
        }
    }

    /// A classroom for `session`, anchored at `start_ms` unless the config
    /// fixes the start.
    pub fn for_session(session: &LoadedSession, runner: Arc<dyn Runner>, start_ms: i64, record: bool) -> Result<Self, SessionError> {
        let log = match (&session.config.log_path, record) {
            (Some(p), true) => {
                let path = session.resolve(p);
                let storage = FileStorage::open(&path).map_err(|source| SessionError::Io { path, source })?;
                DurableLog::new(Box::new(storage))
            }
            _ => DurableLog::in_memory(),
        };
        let opts = ClassroomOptions {
            start_ms: session.config.session_start_ms.unwrap_or(start_ms),
            end_ms: session.config.session_end_ms,
            tick_interval_ms: session.config.tick_interval_ms,
            exec: Execution::default(),
        };
        Ok(Self::new(
            session.config.session_id.clone(),
            Arc::new(session.exercise.clone()),
            runner,
            opts,
            log,
        ))
    }

    /// Receives every update, in emission order.
    pub fn with_listener(mut self, listener: impl Fn(&LiveUpdate) + Send + Sync + 'static) -> Self {
        self.listener = Some(Box::new(listener));
        self
    }

    fn emit(&self, update: LiveUpdate) {
        if let Some(l) = &self.listener {
            l(&update);
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn options(&self) -> ClassroomOptions {
        self.opts
    }

    pub fn exercise(&self) -> &Exercise {
        &self.exercise
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.exercise.checkpoints
    }

    pub fn runner(&self) -> &dyn Runner {
        self.runner.as_ref()
    }

    pub fn memo(&self) -> &OutcomeMemo {
        &self.memo
    }

    fn lock_ingest(&self) -> std::sync::MutexGuard<'_, IngestState> {
        self.ingest.lock().expect("ingest lock poisoned")
    }

    /// Validates and appends each event in order. Accepted events are
    /// broadcast; late ones invalidate the ticks they precede.
    pub fn ingest(&self, batch: Vec<EditEvent>) -> Vec<Verdict> {
        let mut state = self.lock_ingest();
        let mut verdicts = Vec::with_capacity(batch.len());
        for event in batch {
            if let Err(e) = validate_event(&event, &state.streams) {
                verdicts.push(Verdict::Rejected {
                    error: e.name().into(),
                    field: Some(e.field().into()),
                    message: e.to_string(),
                });
                continue;
            }
            let update = LiveUpdate::StudentEdited {
                student_id: event.student_id.clone(),
                file_path: event.file_path.clone(),
                t_ms: event.timestamp_ms,
            };
            let t = event.timestamp_ms;
            state.streams.observe(&event);
            if let Err(e) = state.log.append(event) {
                verdicts.push(log_error_verdict(&e));
                continue;
            }
            state.last_event_ms = Some(state.last_event_ms.map_or(t, |m| m.max(t)));
            let stale: Vec<i64> = state.claimed.range(t..).copied().collect();
            state.dirty.extend(stale);
            verdicts.push(Verdict::Accepted);
            self.emit(update);
        }
        verdicts
    }

    pub fn view(&self) -> LogView {
        self.lock_ingest().log.log().view()
    }

    pub fn event_count(&self) -> usize {
        self.lock_ingest().log.log().len()
    }

    /// Writes the log in its persisted form.
    pub fn save_log(&self, path: &Path) -> std::io::Result<()> {
        self.lock_ingest().log.log().save(path)
    }

    /// Publishes every tick strictly before `clock_ms` (capped at the
    /// session end) that is new or was invalidated. Returns the ticks
    /// published, ascending.
    pub fn advance_to(&self, clock_ms: i64) -> Vec<i64> {
        self.publish_through(|t| t < clock_ms, None)
    }

    /// Publishes all remaining ticks through the session end: the
    /// configured end, else the latest event or published tick.
    pub fn finish(&self) -> Vec<i64> {
        let end = self.end_ms();
        self.publish_through(|t| t <= end, Some(end))
    }

    /// Effective end instant if the session finished now.
    pub fn end_ms(&self) -> i64 {
        self.opts.end_ms.unwrap_or_else(|| {
            let state = self.lock_ingest();
            let last_tick = state.claimed.last().copied();
            [Some(self.opts.start_ms), state.last_event_ms, last_tick]
                .into_iter()
                .flatten()
                .max()
                .expect("start is always present")
        })
    }

    fn publish_through(&self, due: impl Fn(i64) -> bool, final_tick: Option<i64>) -> Vec<i64> {
        let _guard = self.publish.lock().expect("publish lock poisoned");
        let end = self.opts.end_ms;
        let in_session = |t: i64| t >= self.opts.start_ms && end.is_none_or(|e| t <= e);
        let (view, ticks) = {
            let mut state = self.lock_ingest();
            let mut ticks: BTreeSet<i64> = state.dirty.iter().copied().filter(|&t| due(t)).collect();
            while due(state.next_grid) && in_session(state.next_grid) {
                ticks.insert(state.next_grid);
                state.next_grid += self.opts.tick_interval_ms;
            }
            let end_tick = final_tick.or(end.filter(|&e| due(e)));
            if let Some(e) = end_tick.filter(|&e| in_session(e) && !state.claimed.contains(&e)) {
                ticks.insert(e);
            }
            if ticks.is_empty() {
                return Vec::new();
            }
            for t in &ticks {
                state.dirty.remove(t);
                state.claimed.insert(*t);
            }
            (state.log.log().view(), ticks.into_iter().collect::<Vec<_>>())
        };
        let matrix = build_progress_matrix(
            &view,
            &self.exercise.starter,
            &self.exercise.checkpoints,
            &ticks,
            self.runner.as_ref(),
            self.opts.exec,
            Some(&self.memo),
        );
        let mut next = Published::clone_from_arc(&self.published.read().expect("published lock poisoned"));
        let slices: Vec<Arc<TickSlice>> = matrix.ticks.into_iter().map(Arc::new).collect();
        for s in &slices {
            next.slices.insert(s.t_ms, Arc::clone(s));
        }
        *self.published.write().expect("published lock poisoned") = Arc::new(next);
        for s in &slices {
            tracing::debug!(t_ms = s.t_ms, students = s.students.len(), "tick published");
            self.emit(LiveUpdate::TickReady {
                t_ms: s.t_ms,
                slice_hash: s.slice_hash(),
            });
            self.emit(LiveUpdate::StatsChanged { t_ms: s.t_ms });
        }
        ticks
    }

    fn published(&self) -> Arc<Published> {
        Arc::clone(&self.published.read().expect("published lock poisoned"))
    }

    pub fn published_ticks(&self) -> Vec<i64> {
        self.published().slices.keys().copied().collect()
    }

    /// Latest published slice at or before `t`.
    pub fn progress_at(&self, t: i64) -> Option<Arc<TickSlice>> {
        self.published()
            .slices
            .range(..=t)
            .next_back()
            .map(|(_, s)| Arc::clone(s))
    }

    pub fn latest(&self) -> Option<Arc<TickSlice>> {
        self.published().slices.values().next_back().cloned()
    }

    /// Evaluates the class at `t` without publishing.
    pub fn progress_now(&self, t: i64) -> TickSlice {
        let view = self.view();
        build_progress_matrix(
            &view,
            &self.exercise.starter,
            &self.exercise.checkpoints,
            &[t],
            self.runner.as_ref(),
            self.opts.exec,
            Some(&self.memo),
        )
        .ticks
        .pop()
        .expect("one tick requested")
    }

    pub fn stats_at(&self, t: i64) -> Option<ClassroomStats> {
        self.progress_at(t)
            .map(|s| classroom_stats(&s, &self.exercise.checkpoints))
    }

    /// Published ticks as a matrix.
    pub fn matrix(&self) -> ProgressMatrix {
        let published = self.published();
        let ticks: Vec<TickSlice> = published.slices.values().map(|s| (**s).clone()).collect();
        let errors = ticks
            .iter()
            .flat_map(|s| s.students.iter().flat_map(move |r| row_errors(r, s.t_ms)))
            .collect();
        ProgressMatrix {
            checkpoint_ids: self.exercise.checkpoints.iter().map(|c| c.id.clone()).collect(),
            students: self.view().students().map(str::to_owned).collect(),
            ticks,
            errors,
        }
    }

    pub fn bounds(&self) -> SessionBounds {
        SessionBounds::new(self.opts.start_ms, self.end_ms())
    }

    pub fn snapshot(&self, student_id: &str, t: i64) -> Result<SnapshotView, QueryError> {
        let view = self.view();
        if !view.has_student(student_id) {
            return Err(QueryError::UnknownStudent(student_id.to_owned()));
        }
        let (snap, stream_error) = match reconstruct_at(&view, student_id, t, &self.exercise.starter) {
            Ok(s) => (s, None),
            Err(e) => {
                let message = e.to_string();
                (*e.partial, Some(message))
            }
        };
        Ok(SnapshotView {
            student_id: student_id.to_owned(),
            t_ms: t,
            content_hash: snap.content_hash,
            files: snap.files,
            active_file: active_file(&view, student_id, t),
            stream_error,
        })
    }

    /// Snapshots at `t` of every student who has joined by then.
    pub fn class_snapshots(&self, t: i64) -> Vec<DocumentSnapshot> {
        let view = self.view();
        view.students()
            .filter(|s| view.student_events(s).first().is_some_and(|e| e.timestamp_ms <= t))
            .map(|s| match reconstruct_at(&view, s, t, &self.exercise.starter) {
                Ok(snap) => snap,
                Err(e) => *e.partial,
            })
            .collect()
    }

    /// Finds a task by `checkpoint/task` or by a task id unique across
    /// checkpoints.
    pub fn find_task(&self, task_id: &str) -> Result<(&Checkpoint, &Task), QueryError> {
        let unknown = || QueryError::UnknownTask(task_id.to_owned());
        if let Some((cp, task)) = task_id.split_once('/') {
            let c = self.exercise.checkpoints.iter().find(|c| c.id == cp).ok_or_else(unknown)?;
            return c.task(task).map(|t| (c, t)).ok_or_else(unknown);
        }
        let mut found = self
            .exercise
            .checkpoints
            .iter()
            .filter_map(|c| c.task(task_id).map(|t| (c, t)));
        match (found.next(), found.next()) {
            (Some(hit), None) => Ok(hit),
            _ => Err(unknown()),
        }
    }

    /// Properties compared when clustering element previews.
    pub fn preview_properties(&self) -> Vec<String> {
        let set: BTreeSet<String> = self
            .exercise
            .checkpoints
            .iter()
            .flat_map(Checkpoint::style_properties)
            .collect();
        if set.is_empty() {
            DEFAULT_PREVIEW_PROPERTIES.iter().map(|p| (*p).to_owned()).collect()
        } else {
            set.into_iter().collect()
        }
    }

    /// Property distribution when `property` is given, preview clusters
    /// otherwise.
    pub fn inspect(
        &self,
        task_id: Option<&str>,
        selector: &str,
        property: Option<&str>,
        t: i64,
    ) -> Result<InspectResult, QueryError> {
        let task = task_id.map(|id| self.find_task(id).map(|(_, t)| t)).transpose()?;
        let snapshots = self.class_snapshots(t);
        match property {
            Some(p) => Ok(InspectResult::Distribution(inspect_property(
                &snapshots,
                selector,
                p,
                t,
                self.opts.exec,
            )?)),
            None => Ok(InspectResult::Clusters(preview_clusters(
                &snapshots,
                task,
                selector,
                &self.preview_properties(),
                Some(self.runner.as_ref()),
                t,
                self.opts.exec,
            )?)),
        }
    }

    /// Checks a checkpoint against the reference workspace.
    pub fn verify(&self, checkpoint_id: &str) -> Result<VerificationReport, QueryError> {
        verify_against(&self.exercise, checkpoint_id, self.runner.as_ref())
    }
}

impl Published {
    fn clone_from_arc(p: &Arc<Published>) -> Self {
        Self {
            slices: p.slices.clone(),
        }
    }
}

/// Reference snapshot used for checkpoint verification.
pub fn reference_snapshot(exercise: &Exercise) -> Option<DocumentSnapshot> {
    exercise
        .reference
        .as_ref()
        .map(|files| DocumentSnapshot::new("reference", files.clone(), 0))
}

pub fn verify_against(exercise: &Exercise, checkpoint_id: &str, runner: &dyn Runner) -> Result<VerificationReport, QueryError> {
    let cp = exercise
        .checkpoints
        .iter()
        .find(|c| c.id == checkpoint_id)
        .ok_or_else(|| QueryError::UnknownCheckpoint(checkpoint_id.to_owned()))?;
    let reference = reference_snapshot(exercise).ok_or(QueryError::NoReference)?;
    Ok(verify_checkpoint(cp, &reference, runner))
}

/// Observable state of a replay run.
#[derive(Debug, Default)]
pub struct ReplayProgress {
    running: AtomicBool,
    cancelled: AtomicBool,
    cursor_ms: AtomicI64,
    has_cursor: AtomicBool,
    delivered: AtomicUsize,
    total: AtomicUsize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStatus {
    pub running: bool,
    pub cursor_ms: Option<i64>,
    pub delivered: usize,
    pub total: usize,
}

impl ReplayProgress {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn status(&self) -> ReplayStatus {
        ReplayStatus {
            running: self.running.load(Ordering::SeqCst),
            cursor_ms: self
                .has_cursor
                .load(Ordering::SeqCst)
                .then(|| self.cursor_ms.load(Ordering::SeqCst)),
            delivered: self.delivered.load(Ordering::SeqCst),
            total: self.total.load(Ordering::SeqCst),
        }
    }

    pub fn cancel(&self) {
        self.cancelled.store(true, Ordering::SeqCst);
    }
}

struct ClassroomSink<'a> {
    classroom: &'a Classroom,
    progress: &'a ReplayProgress,
}

impl EventSink for ClassroomSink<'_> {
    fn deliver(&mut self, event: &EditEvent) -> Result<(), SinkError> {
        if self.progress.cancelled.load(Ordering::SeqCst) {
            return Err(SinkError("replay cancelled".into()));
        }
        let t = event.timestamp_ms;
        if let Some(Verdict::Rejected { message, .. }) = self.classroom.ingest(vec![event.clone()]).pop() {
            return Err(SinkError(message));
        }
        self.classroom.advance_to(t);
        self.progress.cursor_ms.store(t, Ordering::SeqCst);
        self.progress.has_cursor.store(true, Ordering::SeqCst);
        self.progress.delivered.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

/// Feeds `view` through `classroom` at `speed`, publishing ticks as the
/// cursor passes them, then finishes the session.
pub fn drive_replay(
    classroom: &Classroom,
    view: &LogView,
    speed: ReplaySpeed,
    progress: &ReplayProgress,
) -> Result<ReplayReport, ReplayError> {
    progress.running.store(true, Ordering::SeqCst);
    progress.total.store(view.len(), Ordering::SeqCst);
    let mut clock = ReplayClock::new(speed);
    let mut sink = ClassroomSink { classroom, progress };
    let result = replay(view, &mut clock, &mut sink);
    if result.is_ok() {
        classroom.finish();
    }
    progress.running.store(false, Ordering::SeqCst);
    result
}

/// Interval between live heartbeat checks.
pub const HEARTBEAT: Duration = Duration::from_secs(1);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoints::Assertion;
    use crate::dom::selector::Selector;

    fn exercise() -> Arc<Exercise> {
        let starter = FileMap::from([("index.html".to_owned(), String::new())]);
        let task = Task {
            id: "h1".into(),
            description: "a heading".into(),
            interaction: vec![],
            assertions: vec![Assertion::Exists {
                selector: Selector::parse("h1").unwrap(),
                min_count: 1,
            }],
        };
        Arc::new(Exercise {
            reference: Some(FileMap::from([("index.html".to_owned(), "<h1>x</h1>".to_owned())])),
            starter,
            checkpoints: vec![Checkpoint {
                id: "c".into(),
                title: "C".into(),
                tasks: vec![task],
            }],
            diagnostics: vec![],
        })
    }

    fn ev(student: &str, t: i64, seq: u64, offset: usize, text: &str) -> EditEvent {
        EditEvent {
            student_id: student.into(),
            session_id: "s".into(),
            file_path: "index.html".into(),
            offset,
            delete_count: 0,
            insert_text: text.into(),
            timestamp_ms: t,
            seq,
        }
    }

    fn room() -> Classroom {
        let mut opts = ClassroomOptions::new(0);
        opts.tick_interval_ms = 10;
        Classroom::new("s", exercise(), Arc::new(StaticRunner), opts, DurableLog::in_memory())
    }

    #[test]
    fn publishes_ticks_before_clock() {
        let c = room();
        assert!(c.ingest(vec![ev("a", 5, 1, 0, "<h1>"), ev("a", 15, 2, 4, "x</h1>")]).iter().all(Verdict::is_accepted));
        assert_eq!(c.advance_to(20), vec![0, 10]);
        assert!(c.advance_to(20).is_empty());
        assert_eq!(c.finish(), vec![15]);
        let m = c.matrix();
        assert_eq!(m.ticks.len(), 3);
        assert_eq!(m.ticks[0].students.len(), 0);
        assert_eq!(m.completion(15, "a", "c"), Some(1.0));
    }

    #[test]
    fn late_event_republishes() {
        let c = room();
        c.ingest(vec![ev("a", 5, 1, 0, "<p>")]);
        c.advance_to(30);
        assert_eq!(c.progress_at(25).unwrap().students[0].checkpoints[0].completion, 0.0);
        c.ingest(vec![ev("b", 12, 1, 0, "<h1>y</h1>")]);
        assert_eq!(c.advance_to(30), vec![20]);
        let slice = c.progress_at(25).unwrap();
        assert_eq!(slice.students.len(), 2);
        assert_eq!(slice.student("b").unwrap().checkpoints[0].completion, 1.0);
    }

    #[test]
    fn rejections_carry_names() {
        let c = room();
        let v = c.ingest(vec![ev("a", 1, 2, 0, "x"), ev("a", 2, 2, 0, "y"), ev("a", 3, 3, 0, "")]);
        assert_eq!(v[0], Verdict::Accepted);
        assert!(matches!(&v[1], Verdict::Rejected { error, .. } if error == "RejectSeq"));
        assert!(matches!(&v[2], Verdict::Rejected { error, .. } if error == "RejectNoOp"));
        assert_eq!(c.event_count(), 1);
    }

    #[test]
    fn listener_sees_edits_then_ticks() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&seen);
        let c = room().with_listener(move |u| sink.lock().unwrap().push(u.clone()));
        c.ingest(vec![ev("a", 5, 1, 0, "x")]);
        c.advance_to(6);
        let seen = seen.lock().unwrap();
        assert!(matches!(seen[0], LiveUpdate::StudentEdited { t_ms: 5, .. }));
        assert!(matches!(seen[1], LiveUpdate::TickReady { t_ms: 0, .. }));
        assert!(matches!(seen[2], LiveUpdate::StatsChanged { t_ms: 0 }));
    }

    #[test]
    fn queries() {
        let c = room();
        c.ingest(vec![ev("a", 5, 1, 0, "<h1>hi</h1>")]);
        assert!(matches!(c.snapshot("zz", 5), Err(QueryError::UnknownStudent(_))));
        let snap = c.snapshot("a", 5).unwrap();
        assert_eq!(snap.active_file.unwrap().file_path, "index.html");
        assert!(c.find_task("c/h1").is_ok());
        assert!(c.find_task("h1").is_ok());
        assert!(c.find_task("c/zz").is_err());
        assert!(c.verify("c").unwrap().passed);
        assert!(matches!(c.verify("q"), Err(QueryError::UnknownCheckpoint(_))));
        match c.inspect(None, "h1", Some("color"), 5).unwrap() {
            InspectResult::Distribution(d) => assert_eq!(d.class_size(), 1),
            other => panic!("{other:?}"),
        }
        assert!(matches!(c.inspect(None, "h1 ~ p", None, 5), Err(QueryError::Selector(_))));
    }

    #[test]
    fn replay_drives_to_finish() {
        let c = room();
        let mut log = crate::event_log::EventLog::new();
        log.append(ev("a", 5, 1, 0, "<h1>")).unwrap();
        log.append(ev("a", 25, 2, 4, "x</h1>")).unwrap();
        let progress = ReplayProgress::new();
        let report = drive_replay(&c, &log.view(), ReplaySpeed::Max, &progress).unwrap();
        assert_eq!(report.events_delivered, 2);
        assert_eq!(c.published_ticks(), vec![0, 10, 20, 25]);
        let st = progress.status();
        assert!(!st.running);
        assert_eq!(st.cursor_ms, Some(25));
    }
}
