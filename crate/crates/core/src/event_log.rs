//! Append-only log of keystroke-level edit events.
//!
//! Every student connection produces a stream of [`EditEvent`]s. The log is
//! the single source of truth for everything downstream: document
//! reconstruction, checkpoint evaluation, and replay all read from an
//! immutable [`LogView`] captured at read time.
//!
//! Events are kept in append order (the order lines appear in a persisted
//! `.evlog` file) and iterated in ordering-key order
//! `(timestamp_ms, student_id, session_id, seq)`, which is total once
//! duplicate keys are rejected.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One keystroke-level edit: the atom of ingestion, persistence and replay.
///
/// `offset` and `delete_count` are measured in Unicode scalar values from the
/// start of the file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditEvent {
    pub student_id: String,
    pub session_id: String,
    pub file_path: String,
    pub offset: usize,
    pub delete_count: usize,
    pub insert_text: String,
    pub timestamp_ms: i64,
    pub seq: u64,
}

/// Borrowed total ordering key of an event.
pub type OrderingKey<'a> = (i64, &'a str, &'a str, u64);

impl EditEvent {
    pub fn ordering_key(&self) -> OrderingKey<'_> {
        (
            self.timestamp_ms,
            &self.student_id,
            &self.session_id,
            self.seq,
        )
    }

    /// Checks the per-event invariants that do not depend on stream state.
    pub fn check_shape(&self) -> Result<(), ValidationError> {
        if self.student_id.is_empty() {
            return Err(ValidationError::EmptyId { field: "student_id" });
        }
        if self.session_id.is_empty() {
            return Err(ValidationError::EmptyId { field: "session_id" });
        }
        if self.delete_count == 0 && self.insert_text.is_empty() {
            return Err(ValidationError::NoOp);
        }
        check_workspace_path(&self.file_path).map_err(|reason| ValidationError::Path {
            path: self.file_path.clone(),
            reason,
        })
    }
}

/// Rejects paths that could resolve outside the exercise workspace.
pub fn check_workspace_path(path: &str) -> Result<(), &'static str> {
    if path.is_empty() {
        return Err("is empty");
    }
    if path.starts_with('/') {
        return Err("is absolute");
    }
    if path.contains('\\') {
        return Err("contains a backslash");
    }
    if path.contains('\0') {
        return Err("contains a NUL byte");
    }
    let bytes = path.as_bytes();
    if bytes.len() >= 2 && bytes[1] == b':' && bytes[0].is_ascii_alphabetic() {
        return Err("carries a drive prefix");
    }
    for segment in path.split('/') {
        match segment {
            "" => return Err("contains an empty segment"),
            "." => return Err("contains a '.' segment"),
            ".." => return Err("contains a parent traversal"),
            _ => {}
        }
    }
    Ok(())
}

/// Why an incoming event was refused. Each variant names the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("RejectNoOp: delete_count is 0 and insert_text is empty")]
    NoOp,
    #[error("RejectPath: file_path {path:?} {reason}")]
    Path { path: String, reason: &'static str },
    #[error("RejectSeq: seq {seq} does not exceed last seen seq {last} for ({student_id}, {session_id})")]
    Seq {
        student_id: String,
        session_id: String,
        seq: u64,
        last: u64,
    },
    #[error("RejectId: {field} must be non-empty")]
    EmptyId { field: &'static str },
}

impl ValidationError {
    /// Stable error name used in API verdicts.
    pub fn name(&self) -> &'static str {
        match self {
            ValidationError::NoOp => "RejectNoOp",
            ValidationError::Path { .. } => "RejectPath",
            ValidationError::Seq { .. } => "RejectSeq",
            ValidationError::EmptyId { .. } => "RejectId",
        }
    }

    pub fn field(&self) -> &'static str {
        match self {
            ValidationError::NoOp => "insert_text",
            ValidationError::Path { .. } => "file_path",
            ValidationError::Seq { .. } => "seq",
            ValidationError::EmptyId { field } => field,
        }
    }
}

/// Last accepted `seq` per `(student_id, session_id)` stream.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    last_seq: HashMap<(String, String), u64>,
}

impl StreamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_seq(&self, student_id: &str, session_id: &str) -> Option<u64> {
        self.last_seq
            .get(&(student_id.to_owned(), session_id.to_owned()))
            .copied()
    }

    /// Validates `event` and, if accepted, records its seq.
    pub fn admit(&mut self, event: &EditEvent) -> Result<(), ValidationError> {
        validate_event(event, self)?;
        self.observe(event);
        Ok(())
    }

    pub fn observe(&mut self, event: &EditEvent) {
        let key = (event.student_id.clone(), event.session_id.clone());
        let slot = self.last_seq.entry(key).or_insert(event.seq);
        *slot = (*slot).max(event.seq);
    }
}

/// Accepts `event` when every invariant holds and its seq exceeds the last one
/// seen on its stream. Does not record anything; see [`StreamState::admit`].
pub fn validate_event(event: &EditEvent, state: &StreamState) -> Result<(), ValidationError> {
    event.check_shape()?;
    if let Some(last) = state.last_seq(&event.student_id, &event.session_id) {
        if event.seq <= last {
            return Err(ValidationError::Seq {
                student_id: event.student_id.clone(),
                session_id: event.session_id.clone(),
                seq: event.seq,
                last,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("ConflictError: two events share ordering key (t={timestamp_ms}, student={student_id}, session={session_id}, seq={seq})")]
    Conflict {
        timestamp_ms: i64,
        student_id: String,
        session_id: String,
        seq: u64,
    },
    #[error("StorageError: {0}")]
    Storage(#[from] io::Error),
}

impl LogError {
    fn conflict(event: &EditEvent) -> Self {
        LogError::Conflict {
            timestamp_ms: event.timestamp_ms,
            student_id: event.student_id.clone(),
            session_id: event.session_id.clone(),
            seq: event.seq,
        }
    }
}

/// In-memory append-only event log.
///
/// Equality compares append order, which is what persistence preserves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<EditEvent>,
    /// Indices into `events`, sorted by ordering key.
    order: Vec<usize>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Appends an (already validated) event. Late events land at their
    /// ordering-key position.
    pub fn append(&mut self, event: EditEvent) -> Result<(), LogError> {
        let key = event.ordering_key();
        let pos = match self
            .order
            .binary_search_by(|&i| self.events[i].ordering_key().cmp(&key))
        {
            Ok(_) => return Err(LogError::conflict(&event)),
            Err(pos) => pos,
        };
        self.order.insert(pos, self.events.len());
        self.events.push(event);
        Ok(())
    }

    /// Events in ordering-key order.
    pub fn iter(&self) -> impl Iterator<Item = &EditEvent> + '_ {
        self.order.iter().map(move |&i| &self.events[i])
    }

    /// Events in the order they were appended.
    pub fn appended(&self) -> &[EditEvent] {
        &self.events
    }

    /// Captures an immutable, ordered view for readers.
    pub fn view(&self) -> LogView {
        LogView::from_sorted(self.iter().cloned().collect())
    }

    /// Writes the persisted form: one JSON object per line, append order.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for event in &self.events {
            write_event_line(&mut out, event)?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let file = File::create(path)?;
        self.write_to(io::BufWriter::new(file))
    }
}

fn write_event_line<W: Write>(out: &mut W, event: &EditEvent) -> io::Result<()> {
    serde_json::to_writer(&mut *out, event).map_err(io::Error::other)?;
    out.write_all(b"\n")
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("FormatError at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("I/O error reading log: {0}")]
    Io(#[from] io::Error),
}

/// Reads a persisted log. Blank lines are skipped; any other malformed line
/// is reported with its 1-based line number.
pub fn load_log<R: BufRead>(source: R) -> Result<EventLog, LoadError> {
    let mut log = EventLog::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: EditEvent = serde_json::from_str(&line).map_err(|e| LoadError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        event.check_shape().map_err(|e| LoadError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        log.append(event).map_err(|e| LoadError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
    }
    Ok(log)
}

pub fn load_log_file(path: &Path) -> Result<EventLog, LoadError> {
    let file = File::open(path)?;
    load_log(io::BufReader::new(file))
}

/// Multiset union of several logs, globally ordered.
///
/// The merged log's append order is its ordering-key order.
pub fn merge_logs<'a, I>(logs: I) -> Result<EventLog, LogError>
where
    I: IntoIterator<Item = &'a EventLog>,
{
    let mut all: Vec<EditEvent> = logs
        .into_iter()
        .flat_map(|log| log.events.iter().cloned())
        .collect();
    all.sort_by(|a, b| a.ordering_key().cmp(&b.ordering_key()));
    if let Some(pair) = all
        .windows(2)
        .find(|w| w[0].ordering_key() == w[1].ordering_key())
    {
        return Err(LogError::conflict(&pair[0]));
    }
    let order = (0..all.len()).collect();
    Ok(EventLog { events: all, order })
}

/// Where appended events go besides memory.
pub trait LogStorage: Send {
    fn append(&mut self, event: &EditEvent) -> io::Result<()>;
}

/// Storage that keeps nothing; the in-memory log is the only copy.
#[derive(Debug, Default)]
pub struct MemoryStorage;

impl LogStorage for MemoryStorage {
    fn append(&mut self, _event: &EditEvent) -> io::Result<()> {
        Ok(())
    }
}

/// Line-delimited `.evlog` file, flushed after every event.
#[derive(Debug)]
pub struct FileStorage {
    file: File,
}

impl FileStorage {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }
}

impl LogStorage for FileStorage {
    fn append(&mut self, event: &EditEvent) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

/// An [`EventLog`] whose appends are written through a [`LogStorage`] first.
pub struct DurableLog {
    log: EventLog,
    storage: Box<dyn LogStorage>,
}

impl DurableLog {
    pub fn new(storage: Box<dyn LogStorage>) -> Self {
        Self {
            log: EventLog::new(),
            storage,
        }
    }

    pub fn in_memory() -> Self {
        Self::new(Box::new(MemoryStorage))
    }

    pub fn append(&mut self, event: EditEvent) -> Result<(), LogError> {
        let key = event.ordering_key();
        if self
            .log
            .order
            .binary_search_by(|&i| self.log.events[i].ordering_key().cmp(&key))
            .is_ok()
        {
            return Err(LogError::conflict(&event));
        }
        self.storage.append(&event)?;
        self.log.append(event)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }
}

impl std::fmt::Debug for DurableLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DurableLog")
            .field("events", &self.log.len())
            .finish_non_exhaustive()
    }
}

/// Immutable ordered snapshot of a log, cheap to clone and share.
#[derive(Debug, Clone, Default)]
pub struct LogView {
    events: Arc<[EditEvent]>,
    students: Arc<BTreeMap<String, Arc<[EditEvent]>>>,
}

impl LogView {
    /// Builds a view from events already in ordering-key order.
    pub fn from_sorted(events: Vec<EditEvent>) -> Self {
        debug_assert!(events
            .windows(2)
            .all(|w| w[0].ordering_key() <= w[1].ordering_key()));
        let mut per_student: BTreeMap<String, Vec<EditEvent>> = BTreeMap::new();
        for event in &events {
            per_student
                .entry(event.student_id.clone())
                .or_default()
                .push(event.clone());
        }
        let students = per_student
            .into_iter()
            .map(|(k, v)| (k, Arc::from(v)))
            .collect();
        Self {
            events: Arc::from(events),
            students: Arc::new(students),
        }
    }

    pub fn events(&self) -> &[EditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Student ids present in the view, sorted.
    pub fn students(&self) -> impl Iterator<Item = &str> + '_ {
        self.students.keys().map(String::as_str)
    }

    pub fn has_student(&self, student_id: &str) -> bool {
        self.students.contains_key(student_id)
    }

    /// One student's events in ordering-key order (empty if unknown).
    pub fn student_events(&self, student_id: &str) -> &[EditEvent] {
        self.students
            .get(student_id)
            .map(|events| &events[..])
            .unwrap_or(&[])
    }

    /// First and last timestamps, if any events exist.
    pub fn time_span(&self) -> Option<(i64, i64)> {
        Some((
            self.events.first()?.timestamp_ms,
            self.events.last()?.timestamp_ms,
        ))
    }
}

/// Replay pacing: real time scaled by a factor, or as fast as possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    Max,
    Factor(f64),
}

impl FromStr for ReplaySpeed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("max") || s == "inf" {
            return Ok(ReplaySpeed::Max);
        }
        let factor: f64 = s
            .parse()
            .map_err(|_| format!("speed must be a positive number or \"max\", got {s:?}"))?;
        if !factor.is_finite() || factor <= 0.0 {
            return Err(format!("speed must be positive, got {s:?}"));
        }
        Ok(ReplaySpeed::Factor(factor))
    }
}

impl Serialize for ReplaySpeed {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ReplaySpeed::Max => serializer.serialize_str("max"),
            ReplaySpeed::Factor(f) => serializer.serialize_f64(*f),
        }
    }
}

impl<'de> Deserialize<'de> for ReplaySpeed {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        let text = match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s,
            Raw::Number(n) => n.to_string(),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Virtual clock driving a replay run.
#[derive(Debug, Clone)]
pub struct ReplayClock {
    speed: ReplaySpeed,
    cursor_ms: Option<i64>,
}

impl ReplayClock {
    pub fn new(speed: ReplaySpeed) -> Self {
        Self {
            speed,
            cursor_ms: None,
        }
    }

    pub fn speed(&self) -> ReplaySpeed {
        self.speed
    }

    /// Virtual time of the last delivered event.
    pub fn cursor_ms(&self) -> Option<i64> {
        self.cursor_ms
    }

    /// Wall delay owed before delivering an event stamped `next_ms`.
    fn delay_until(&self, next_ms: i64) -> Duration {
        match (self.speed, self.cursor_ms) {
            (ReplaySpeed::Max, _) | (_, None) => Duration::ZERO,
            (ReplaySpeed::Factor(f), Some(cursor)) => {
                let delta = (next_ms - cursor).max(0) as f64;
                Duration::from_secs_f64(delta / f / 1000.0)
            }
        }
    }

    fn advance(&mut self, to_ms: i64) {
        self.cursor_ms = Some(self.cursor_ms.map_or(to_ms, |c| c.max(to_ms)));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("SinkError: {0}")]
pub struct SinkError(pub String);

/// Consumer of replayed events.
pub trait EventSink {
    fn deliver(&mut self, event: &EditEvent) -> Result<(), SinkError>;
}

impl<F> EventSink for F
where
    F: FnMut(&EditEvent) -> Result<(), SinkError>,
{
    fn deliver(&mut self, event: &EditEvent) -> Result<(), SinkError> {
        self(event)
    }
}

/// Sleeps between deliveries. Swappable so tests can observe delays.
pub trait Pacer {
    fn wait(&mut self, delay: Duration);
}

#[derive(Debug, Default)]
pub struct ThreadPacer;

impl Pacer for ThreadPacer {
    fn wait(&mut self, delay: Duration) {
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub events_delivered: usize,
}

#[derive(Debug, Error)]
#[error("replay aborted after {delivered} events: {source}")]
pub struct ReplayError {
    pub delivered: usize,
    #[source]
    pub source: SinkError,
}

/// Delivers every event of `view` to `sink` in ordering-key order, sleeping
/// on the thread between events according to the clock's speed.
pub fn replay(
    view: &LogView,
    clock: &mut ReplayClock,
    sink: &mut dyn EventSink,
) -> Result<ReplayReport, ReplayError> {
    replay_paced(view, clock, sink, &mut ThreadPacer)
}

pub fn replay_paced(
    view: &LogView,
    clock: &mut ReplayClock,
    sink: &mut dyn EventSink,
    pacer: &mut dyn Pacer,
) -> Result<ReplayReport, ReplayError> {
    let mut delivered = 0;
    for event in view.events() {
        pacer.wait(clock.delay_until(event.timestamp_ms));
        clock.advance(event.timestamp_ms);
        sink.deliver(event)
            .map_err(|source| ReplayError { delivered, source })?;
        delivered += 1;
    }
    Ok(ReplayReport {
        events_delivered: delivered,
    })
}
