//! Reconstruction of a student's multi-file code state at any instant.
//!
//! A snapshot is the starter workspace with every one of the student's edits
//! up to (and including) the query time applied in ordering-key order.
//! [`SnapshotCache`] keeps reconstructed states at tick boundaries so a query
//! only replays the short tail after the nearest boundary.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event_log::{EditEvent, LogView};
use crate::par::{self, Execution};

/// File path → full text.
pub type FileMap = BTreeMap<String, String>;

/// Default spacing of evaluation ticks.
pub const MINUTE_MS: i64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
#[error("OutOfBounds: offset {offset} + delete_count {delete_count} exceeds length {length}")]
pub struct OutOfBounds {
    pub offset: usize,
    pub delete_count: usize,
    pub length: usize,
}

/// Byte index of the `chars`-th scalar value, or `None` past the end.
fn byte_index(text: &str, chars: usize) -> Option<usize> {
    if chars == 0 {
        return Some(0);
    }
    let mut seen = 0;
    for (idx, _) in text.char_indices() {
        if seen == chars {
            return Some(idx);
        }
        seen += 1;
    }
    (seen == chars).then_some(text.len())
}

/// Replaces `[offset, offset + delete_count)` (in scalar values) with
/// `insert_text`.
pub fn apply_edit(
    text: &str,
    offset: usize,
    delete_count: usize,
    insert_text: &str,
) -> Result<String, OutOfBounds> {
    let mut out = text.to_owned();
    apply_edit_in_place(&mut out, offset, delete_count, insert_text)?;
    Ok(out)
}

pub fn apply_edit_in_place(
    text: &mut String,
    offset: usize,
    delete_count: usize,
    insert_text: &str,
) -> Result<(), OutOfBounds> {
    let oob = |text: &str| OutOfBounds {
        offset,
        delete_count,
        length: text.chars().count(),
    };
    let start = byte_index(text, offset).ok_or_else(|| oob(text))?;
    let end = offset
        .checked_add(delete_count)
        .and_then(|_| byte_index(&text[start..], delete_count))
        .map(|rel| start + rel)
        .ok_or_else(|| oob(text))?;
    text.replace_range(start..end, insert_text);
    Ok(())
}

fn apply_event(files: &mut FileMap, event: &EditEvent) -> Result<(), OutOfBounds> {
    let text = files.entry(event.file_path.clone()).or_default();
    apply_edit_in_place(text, event.offset, event.delete_count, &event.insert_text)
}

/// Digest over sorted `(path, text)` pairs with length framing.
pub fn content_hash(files: &FileMap) -> String {
    let mut hasher = Sha256::new();
    for (path, text) in files {
        hasher.update((path.len() as u64).to_le_bytes());
        hasher.update(path.as_bytes());
        hasher.update((text.len() as u64).to_le_bytes());
        hasher.update(text.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// A student's full code state at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSnapshot {
    pub student_id: String,
    pub files: FileMap,
    pub timestamp_ms: i64,
    pub content_hash: String,
}

impl DocumentSnapshot {
    pub fn new(student_id: impl Into<String>, files: FileMap, timestamp_ms: i64) -> Self {
        let content_hash = content_hash(&files);
        Self {
            student_id: student_id.into(),
            files,
            timestamp_ms,
            content_hash,
        }
    }

    fn retimed(&self, timestamp_ms: i64) -> Self {
        Self {
            timestamp_ms,
            ..self.clone()
        }
    }
}

/// A student's stream could not be applied.
#[derive(Debug, Clone, Error)]
#[error("StreamCorrupt: {student_id} event seq {} at t={} failed: {error}", event.seq, event.timestamp_ms)]
pub struct StreamCorrupt {
    pub student_id: String,
    /// State just before the failing event.
    pub partial: Box<DocumentSnapshot>,
    pub event: Box<EditEvent>,
    pub error: OutOfBounds,
}

/// Rebuilds `student_id`'s files at `t` from scratch.
pub fn reconstruct_at(
    view: &LogView,
    student_id: &str,
    t: i64,
    starter: &FileMap,
) -> Result<DocumentSnapshot, StreamCorrupt> {
    let mut files = starter.clone();
    for event in view.student_events(student_id) {
        if event.timestamp_ms > t {
            break;
        }
        if let Err(error) = apply_event(&mut files, event) {
            return Err(StreamCorrupt {
                student_id: student_id.to_owned(),
                partial: Box::new(DocumentSnapshot::new(student_id, files, t)),
                event: Box::new(event.clone()),
                error,
            });
        }
    }
    Ok(DocumentSnapshot::new(student_id, files, t))
}

/// Start and end instants of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionBounds {
    pub start_ms: i64,
    pub end_ms: i64,
}

impl SessionBounds {
    pub fn new(start_ms: i64, end_ms: i64) -> Self {
        Self { start_ms, end_ms }
    }

    /// Bounds spanning the first and last event of a view.
    pub fn spanning(view: &LogView) -> Option<Self> {
        view.time_span().map(|(s, e)| Self::new(s, e))
    }
}

/// Tick instants every `interval_ms` from the session start, plus the end
/// instant when it does not fall on a boundary.
pub fn ticks(bounds: SessionBounds, interval_ms: i64) -> Vec<i64> {
    assert!(interval_ms > 0, "tick interval must be positive");
    let mut out = Vec::new();
    let mut t = bounds.start_ms;
    while t <= bounds.end_ms {
        out.push(t);
        t += interval_ms;
    }
    if out.last() != Some(&bounds.end_ms) && bounds.end_ms > bounds.start_ms {
        out.push(bounds.end_ms);
    }
    out
}

pub fn minute_ticks(bounds: SessionBounds) -> Vec<i64> {
    ticks(bounds, MINUTE_MS)
}

/// File most recently edited by a student at or before some instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveFileMarker {
    pub student_id: String,
    pub file_path: String,
    pub timestamp_ms: i64,
}

pub fn active_file(view: &LogView, student_id: &str, t: i64) -> Option<ActiveFileMarker> {
    let events = view.student_events(student_id);
    let n = events.partition_point(|e| e.timestamp_ms <= t);
    let last = events[..n].last()?;
    Some(ActiveFileMarker {
        student_id: student_id.to_owned(),
        file_path: last.file_path.clone(),
        timestamp_ms: last.timestamp_ms,
    })
}

/// Reads a starter workspace directory into a file map with `/`-separated
/// relative paths.
pub fn load_workspace(root: &Path) -> io::Result<FileMap> {
    let mut files = FileMap::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .map_err(io::Error::other)?
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        files.insert(rel, std::fs::read_to_string(entry.path())?);
    }
    Ok(files)
}

#[derive(Debug)]
struct Boundary {
    t: i64,
    /// Number of the student's events applied at this boundary.
    applied: usize,
    snapshot: Arc<DocumentSnapshot>,
}

#[derive(Debug)]
struct Timeline {
    events: Vec<EditEvent>,
    boundaries: Vec<Boundary>,
    /// Index of the first event that failed to apply, if any.
    corrupt_at: Option<usize>,
}

/// Per-student snapshots at fixed boundaries plus the event tails after them.
///
/// Immutable once built; maintainers publish a fresh cache instead of
/// mutating one readers might hold.
#[derive(Debug)]
pub struct SnapshotCache {
    starter: FileMap,
    students: BTreeMap<String, Timeline>,
}

impl SnapshotCache {
    pub fn build(view: &LogView, starter: &FileMap, boundaries: &[i64]) -> Self {
        Self::build_with(view, starter, boundaries, Execution::default())
    }

    pub fn build_with(
        view: &LogView,
        starter: &FileMap,
        boundaries: &[i64],
        exec: Execution,
    ) -> Self {
        let mut sorted = boundaries.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let ids: Vec<&str> = view.students().collect();
        let timelines = par::map(exec, &ids, |id| {
            build_timeline(id, view.student_events(id), starter, &sorted)
        });
        Self {
            starter: starter.clone(),
            students: ids
                .into_iter()
                .map(str::to_owned)
                .zip(timelines)
                .collect(),
        }
    }

    pub fn students(&self) -> impl Iterator<Item = &str> + '_ {
        self.students.keys().map(String::as_str)
    }

    /// Same contract as [`reconstruct_at`], served from the nearest cached
    /// boundary at or before `t`.
    pub fn reconstruct_at(&self, student_id: &str, t: i64) -> Result<DocumentSnapshot, StreamCorrupt> {
        let Some(timeline) = self.students.get(student_id) else {
            return Ok(DocumentSnapshot::new(student_id, self.starter.clone(), t));
        };
        let idx = timeline.boundaries.partition_point(|b| b.t <= t);
        let (mut files, applied) = match idx.checked_sub(1).map(|i| &timeline.boundaries[i]) {
            Some(b) => {
                let pending = timeline.events[b.applied..]
                    .first()
                    .is_some_and(|e| e.timestamp_ms <= t);
                if !pending && timeline.corrupt_at != Some(b.applied) {
                    return Ok(b.snapshot.retimed(t));
                }
                (b.snapshot.files.clone(), b.applied)
            }
            None => (self.starter.clone(), 0),
        };
        for event in &timeline.events[applied..] {
            if event.timestamp_ms > t {
                break;
            }
            if let Err(error) = apply_event(&mut files, event) {
                return Err(StreamCorrupt {
                    student_id: student_id.to_owned(),
                    partial: Box::new(DocumentSnapshot::new(student_id, files, t)),
                    event: Box::new(event.clone()),
                    error,
                });
            }
        }
        Ok(DocumentSnapshot::new(student_id, files, t))
    }
}

fn build_timeline(
    student_id: &str,
    events: &[EditEvent],
    starter: &FileMap,
    boundaries: &[i64],
) -> Timeline {
    let mut files = starter.clone();
    let mut applied = 0;
    let mut corrupt_at = None;
    let mut out = Vec::with_capacity(boundaries.len());
    for &t in boundaries {
        while corrupt_at.is_none() && applied < events.len() && events[applied].timestamp_ms <= t {
            if apply_event(&mut files, &events[applied]).is_err() {
                corrupt_at = Some(applied);
                break;
            }
            applied += 1;
        }
        out.push(Boundary {
            t,
            applied,
            snapshot: Arc::new(DocumentSnapshot::new(student_id, files.clone(), t)),
        });
    }
    Timeline {
        events: events.to_vec(),
        boundaries: out,
        corrupt_at,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::EventLog;

    fn ev(t: i64, seq: u64, path: &str, offset: usize, del: usize, text: &str) -> EditEvent {
        EditEvent {
            student_id: "s01".into(),
            session_id: "x".into(),
            file_path: path.into(),
            offset,
            delete_count: del,
            insert_text: text.into(),
            timestamp_ms: t,
            seq,
        }
    }

    #[test]
    fn apply_edit_examples() {
        assert_eq!(apply_edit("", 0, 0, "a").unwrap(), "a");
        assert_eq!(apply_edit("hello", 0, 5, "bye").unwrap(), "bye");
        assert_eq!(apply_edit("héllo", 1, 1, "e").unwrap(), "hello");
        assert_eq!(apply_edit("a🎉b", 2, 1, "c").unwrap(), "a🎉c");
    }

    #[test]
    fn apply_edit_out_of_bounds() {
        let err = apply_edit("abc", 2, 2, "").unwrap_err();
        assert_eq!(
            err,
            OutOfBounds {
                offset: 2,
                delete_count: 2,
                length: 3
            }
        );
        assert!(apply_edit("abc", 4, 0, "x").is_err());
        assert!(apply_edit("abc", usize::MAX, 1, "x").is_err());
    }

    #[test]
    fn tick_counts() {
        let twenty = SessionBounds::new(0, 20 * MINUTE_MS);
        assert_eq!(minute_ticks(twenty).len(), 21);
        let ragged = SessionBounds::new(0, 20 * MINUTE_MS + 5);
        let t = minute_ticks(ragged);
        assert_eq!(t.len(), 22);
        assert_eq!(*t.last().unwrap(), 20 * MINUTE_MS + 5);
        assert_eq!(minute_ticks(SessionBounds::new(7, 7)), vec![7]);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn reconstruct_before_first_event_is_starter() {
        let mut log = EventLog::new();
        log.append(ev(100, 1, "index.html", 0, 0, "<p>")).unwrap();
        let starter: FileMap = [("index.html".to_string(), String::new())].into();
        let snap = reconstruct_at(&log.view(), "s01", 50, &starter).unwrap();
        assert_eq!(snap.files, starter);
        let snap = reconstruct_at(&log.view(), "s01", 100, &starter).unwrap();
        assert_eq!(snap.files["index.html"], "<p>");
    }

    #[test]
    fn first_edit_creates_file() {
        let mut log = EventLog::new();
        log.append(ev(1, 1, "extra.js", 0, 0, "x")).unwrap();
        let snap = reconstruct_at(&log.view(), "s01", 1, &FileMap::new()).unwrap();
        assert_eq!(snap.files["extra.js"], "x");
    }

    #[test]
    fn corrupt_stream_reports_partial() {
        let mut log = EventLog::new();
        log.append(ev(1, 1, "a.css", 0, 0, "ab")).unwrap();
        log.append(ev(2, 2, "a.css", 5, 0, "x")).unwrap();
        let err = reconstruct_at(&log.view(), "s01", 10, &FileMap::new()).unwrap_err();
        assert_eq!(err.partial.files["a.css"], "ab");
        assert_eq!(err.event.seq, 2);
        let cache = SnapshotCache::build(&log.view(), &FileMap::new(), &[0, 5]);
        let cached = cache.reconstruct_at("s01", 10).unwrap_err();
        assert_eq!(cached.partial.content_hash, err.partial.content_hash);
        assert!(cache.reconstruct_at("s01", 1).is_ok());
    }

    #[test]
    fn active_file_tracks_latest_edit() {
        let mut log = EventLog::new();
        log.append(ev(10, 1, "index.html", 0, 0, "a")).unwrap();
        log.append(ev(20, 2, "styles.css", 0, 0, "b")).unwrap();
        let view = log.view();
        assert_eq!(active_file(&view, "s01", 5), None);
        assert_eq!(active_file(&view, "s01", 15).unwrap().file_path, "index.html");
        assert_eq!(active_file(&view, "s01", 25).unwrap().file_path, "styles.css");
        assert_eq!(active_file(&view, "nobody", 25), None);
    }

    #[test]
    fn hash_ignores_insertion_order() {
        let mut a = FileMap::new();
        a.insert("x".into(), "1".into());
        a.insert("y".into(), "2".into());
        let mut b = FileMap::new();
        b.insert("y".into(), "2".into());
        b.insert("x".into(), "1".into());
        assert_eq!(content_hash(&a), content_hash(&b));
        // framing keeps path/text boundaries distinct
        let c: FileMap = [("ab".to_string(), "c".to_string())].into();
        let d: FileMap = [("a".to_string(), "bc".to_string())].into();
        assert_ne!(content_hash(&c), content_hash(&d));
    }

    #[test]
    fn workspace_loading_uses_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("index.html"), "<p>").unwrap();
        std::fs::write(dir.path().join("sub/a.js"), "1").unwrap();
        let files = load_workspace(dir.path()).unwrap();
        assert_eq!(files.keys().collect::<Vec<_>>(), vec!["index.html", "sub/a.js"]);
    }
}
