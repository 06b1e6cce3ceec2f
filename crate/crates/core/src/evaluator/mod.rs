//! Task evaluation through a runner seam, completion rates, the progress
//! matrix over ticks, and classroom statistics.

mod protocol;
mod static_runner;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoints::{Checkpoint, Task};
use crate::document_store::{DocumentSnapshot, FileMap, SnapshotCache};
use crate::event_log::LogView;
use crate::par::{self, Execution};

pub use protocol::{Handshake, ProtocolError, ProtocolRunner, RenderRequest, RunnerRequest, RunnerResponse};
pub use static_runner::{
    all_failures, check_assertion, declared_by_rule, first_failure, judge, page_path, Page, StaticRunner,
    NO_HTML_DETAIL, UNSUPPORTED_DETAIL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Unsupported,
    /// Runner malfunction, never a verdict on student code.
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub checkpoint_id: String,
    pub task_id: String,
    pub status: Status,
    pub detail: String,
    pub evaluated_at_ms: i64,
    pub snapshot_hash: String,
}

impl TaskOutcome {
    pub fn new(
        checkpoint_id: &str,
        task_id: &str,
        status: Status,
        detail: String,
        snapshot: &DocumentSnapshot,
    ) -> Self {
        Self {
            checkpoint_id: checkpoint_id.to_owned(),
            task_id: task_id.to_owned(),
            status,
            detail,
            evaluated_at_ms: snapshot.timestamp_ms,
            snapshot_hash: snapshot.content_hash.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    StaticOnly,
    Interactive,
}

/// A task together with the checkpoint it belongs to.
#[derive(Debug, Clone, Copy)]
pub struct TaskRef<'a> {
    pub checkpoint_id: &'a str,
    pub task: &'a Task,
}

/// Evaluates tasks against snapshots. Must be deterministic for a fixed
/// (task, snapshot).
pub trait Runner: Send + Sync {
    fn capabilities(&self) -> Capability;

    /// One outcome per task, in order. Implementations may share parsing
    /// work across the batch.
    fn evaluate_batch(&self, tasks: &[TaskRef<'_>], snapshot: &DocumentSnapshot) -> Vec<TaskOutcome>;

    fn evaluate(&self, checkpoint_id: &str, task: &Task, snapshot: &DocumentSnapshot) -> TaskOutcome {
        self.evaluate_batch(&[TaskRef { checkpoint_id, task }], snapshot)
            .pop()
            .expect("runner returns one outcome per task")
    }

    /// The page after running `task`'s interaction, for runners that can
    /// execute it. `None` when unsupported.
    fn render_after(&self, _task: &Task, _snapshot: &DocumentSnapshot) -> Option<Result<FileMap, String>> {
        None
    }
}

type MemoKey = (String, String, String);

/// Outcomes keyed by (checkpoint, task, snapshot hash) so unchanged code is
/// never evaluated twice. Racing inserts store identical values.
#[derive(Debug, Default)]
pub struct OutcomeMemo {
    entries: RwLock<HashMap<MemoKey, (Status, String)>>,
    misses: AtomicUsize,
}

impl OutcomeMemo {
    pub fn new() -> Self {
        Self::default()
    }

    fn get(&self, key: &MemoKey) -> Option<(Status, String)> {
        self.entries.read().expect("memo lock poisoned").get(key).cloned()
    }

    fn insert(&self, key: MemoKey, value: (Status, String)) {
        self.entries.write().expect("memo lock poisoned").insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("memo lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tasks that had to be sent to the runner so far.
    pub fn runner_evaluations(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointProgress {
    pub checkpoint_id: String,
    pub completion: f64,
    pub outcomes: Vec<TaskOutcome>,
}

/// Fraction of outcomes that passed; unsupported and error count as not
/// passed.
pub fn completion_rate(outcomes: &[TaskOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let passed = outcomes.iter().filter(|o| o.status == Status::Pass).count();
    passed as f64 / outcomes.len() as f64
}

/// Evaluates every task of every checkpoint against one snapshot.
pub fn evaluate_snapshot(
    checkpoints: &[Checkpoint],
    runner: &dyn Runner,
    memo: Option<&OutcomeMemo>,
    snapshot: &DocumentSnapshot,
) -> Vec<CheckpointProgress> {
    let all: Vec<TaskRef<'_>> = checkpoints
        .iter()
        .flat_map(|c| {
            c.tasks.iter().map(move |task| TaskRef {
                checkpoint_id: &c.id,
                task,
            })
        })
        .collect();
    let key = |t: &TaskRef<'_>| {
        (
            t.checkpoint_id.to_owned(),
            t.task.id.clone(),
            snapshot.content_hash.clone(),
        )
    };
    let mut results: Vec<Option<TaskOutcome>> = vec![None; all.len()];
    let mut misses = Vec::new();
    for (i, t) in all.iter().enumerate() {
        match memo.and_then(|m| m.get(&key(t))) {
            Some((status, detail)) => {
                results[i] = Some(TaskOutcome::new(t.checkpoint_id, &t.task.id, status, detail, snapshot));
            }
            None => misses.push(i),
        }
    }
    if !misses.is_empty() {
        let batch: Vec<TaskRef<'_>> = misses.iter().map(|&i| all[i]).collect();
        let outcomes = runner.evaluate_batch(&batch, snapshot);
        if let Some(m) = memo {
            m.misses.fetch_add(batch.len(), Ordering::Relaxed);
        }
        for (&i, outcome) in misses.iter().zip(outcomes) {
            if let Some(m) = memo {
                if outcome.status != Status::Error {
                    m.insert(key(&all[i]), (outcome.status, outcome.detail.clone()));
                }
            }
            results[i] = Some(outcome);
        }
    }
    let mut results = results.into_iter().map(|o| o.expect("every task evaluated"));
    checkpoints
        .iter()
        .map(|c| {
            let outcomes: Vec<TaskOutcome> = results.by_ref().take(c.tasks.len()).collect();
            CheckpointProgress {
                checkpoint_id: c.id.clone(),
                completion: completion_rate(&outcomes),
                outcomes,
            }
        })
        .collect()
}

/// One student's row at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentProgress {
    pub student_id: String,
    pub snapshot_hash: String,
    pub checkpoints: Vec<CheckpointProgress>,
    /// Set when the student's stream could not be applied; the row then
    /// reflects the state just before the failing event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_error: Option<String>,
}

/// Reconstructs `student_id` at `t` and evaluates all checkpoints.
pub fn evaluate_student_at(
    cache: &SnapshotCache,
    student_id: &str,
    t: i64,
    checkpoints: &[Checkpoint],
    runner: &dyn Runner,
    memo: Option<&OutcomeMemo>,
) -> StudentProgress {
    let (snapshot, stream_error) = match cache.reconstruct_at(student_id, t) {
        Ok(s) => (s, None),
        Err(e) => {
            let message = e.to_string();
            (*e.partial, Some(message))
        }
    };
    StudentProgress {
        student_id: student_id.to_owned(),
        snapshot_hash: snapshot.content_hash.clone(),
        checkpoints: evaluate_snapshot(checkpoints, runner, memo, &snapshot),
        stream_error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSlice {
    pub t_ms: i64,
    /// Sorted by student id.
    pub students: Vec<StudentProgress>,
}

impl TickSlice {
    /// Digest of the slice's canonical serialization.
    pub fn slice_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("slice serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn student(&self, student_id: &str) -> Option<&StudentProgress> {
        self.students
            .binary_search_by(|s| s.student_id.as_str().cmp(student_id))
            .ok()
            .map(|i| &self.students[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixError {
    pub student_id: String,
    pub t_ms: i64,
    pub message: String,
}

/// Completion per (tick, student, checkpoint) with the underlying outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressMatrix {
    pub checkpoint_ids: Vec<String>,
    pub students: Vec<String>,
    pub ticks: Vec<TickSlice>,
    pub errors: Vec<MatrixError>,
}

impl ProgressMatrix {
    /// Latest tick at or before `t`.
    pub fn slice_at(&self, t: i64) -> Option<&TickSlice> {
        let n = self.ticks.partition_point(|s| s.t_ms <= t);
        n.checked_sub(1).map(|i| &self.ticks[i])
    }

    pub fn completion(&self, t_ms: i64, student_id: &str, checkpoint_id: &str) -> Option<f64> {
        let slice = self.ticks.iter().find(|s| s.t_ms == t_ms)?;
        slice
            .student(student_id)?
            .checkpoints
            .iter()
            .find(|c| c.checkpoint_id == checkpoint_id)
            .map(|c| c.completion)
    }
}

/// Errors worth surfacing from one row: stream corruption and runner
/// malfunctions.
pub fn row_errors(row: &StudentProgress, t_ms: i64) -> Vec<MatrixError> {
    let mut out = Vec::new();
    if let Some(e) = &row.stream_error {
        out.push(MatrixError {
            student_id: row.student_id.clone(),
            t_ms,
            message: e.clone(),
        });
    }
    for o in row.checkpoints.iter().flat_map(|c| &c.outcomes) {
        if o.status == Status::Error {
            out.push(MatrixError {
                student_id: row.student_id.clone(),
                t_ms,
                message: format!("{}/{}: {}", o.checkpoint_id, o.task_id, o.detail),
            });
        }
    }
    out
}

/// A student's rows over `ticks`. A tick whose snapshot hash equals the
/// previous tick's reuses that row without consulting the runner.
pub fn student_rows(
    cache: &SnapshotCache,
    student_id: &str,
    ticks: &[i64],
    checkpoints: &[Checkpoint],
    runner: &dyn Runner,
    memo: Option<&OutcomeMemo>,
) -> Vec<StudentProgress> {
    let mut rows: Vec<StudentProgress> = Vec::with_capacity(ticks.len());
    for &t in ticks {
        let row = match (rows.last(), cache.reconstruct_at(student_id, t)) {
            (Some(prev), Ok(snapshot)) if prev.stream_error.is_none() && prev.snapshot_hash == snapshot.content_hash => {
                retimed(prev, t)
            }
            (_, Ok(snapshot)) => StudentProgress {
                student_id: student_id.to_owned(),
                snapshot_hash: snapshot.content_hash.clone(),
                checkpoints: evaluate_snapshot(checkpoints, runner, memo, &snapshot),
                stream_error: None,
            },
            (_, Err(e)) => {
                let message = e.to_string();
                StudentProgress {
                    student_id: student_id.to_owned(),
                    snapshot_hash: e.partial.content_hash.clone(),
                    checkpoints: evaluate_snapshot(checkpoints, runner, memo, &e.partial),
                    stream_error: Some(message),
                }
            }
        };
        rows.push(row);
    }
    rows
}

fn retimed(row: &StudentProgress, t: i64) -> StudentProgress {
    let mut row = row.clone();
    for o in row.checkpoints.iter_mut().flat_map(|c| c.outcomes.iter_mut()) {
        o.evaluated_at_ms = t;
    }
    row
}

/// Full matrix over `ticks` (strictly increasing) for every student in
/// `view`. Students are evaluated independently, in parallel when `exec`
/// allows.
pub fn build_progress_matrix(
    view: &LogView,
    starter: &FileMap,
    checkpoints: &[Checkpoint],
    ticks: &[i64],
    runner: &dyn Runner,
    exec: Execution,
    memo: Option<&OutcomeMemo>,
) -> ProgressMatrix {
    debug_assert!(ticks.windows(2).all(|w| w[0] < w[1]), "ticks must be strictly increasing");
    let cache = SnapshotCache::build_with(view, starter, ticks, exec);
    let students: Vec<String> = view.students().map(str::to_owned).collect();
    let rows = par::map(exec, &students, |s| {
        let first = view.student_events(s).first().map_or(i64::MAX, |e| e.timestamp_ms);
        let joined = ticks.partition_point(|&t| t < first);
        student_rows(&cache, s, &ticks[joined..], checkpoints, runner, memo)
    });
    assemble(checkpoints, students, ticks, rows)
}

/// Transposes per-student rows into tick slices. Each student's rows cover
/// a suffix of `ticks`, starting at the first tick after they joined.
pub fn assemble(
    checkpoints: &[Checkpoint],
    students: Vec<String>,
    ticks: &[i64],
    rows: Vec<Vec<StudentProgress>>,
) -> ProgressMatrix {
    let mut slices: Vec<TickSlice> = ticks
        .iter()
        .map(|&t_ms| TickSlice {
            t_ms,
            students: Vec::with_capacity(students.len()),
        })
        .collect();
    for student_rows in rows {
        let skip = slices.len() - student_rows.len();
        for (slice, row) in slices.iter_mut().skip(skip).zip(student_rows) {
            slice.students.push(row);
        }
    }
    let errors = slices
        .iter()
        .flat_map(|s| s.students.iter().flat_map(move |r| row_errors(r, s.t_ms)))
        .collect();
    ProgressMatrix {
        checkpoint_ids: checkpoints.iter().map(|c| c.id.clone()).collect(),
        students,
        ticks: slices,
        errors,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStat {
    pub checkpoint_id: String,
    pub task_id: String,
    pub passing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSummary {
    pub checkpoint_id: String,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassroomStats {
    pub t_ms: i64,
    pub class_size: usize,
    pub tasks: Vec<TaskStat>,
    pub checkpoints: Vec<CompletionSummary>,
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    }
}

pub fn classroom_stats(slice: &TickSlice, checkpoints: &[Checkpoint]) -> ClassroomStats {
    let mut tasks = Vec::new();
    let mut summaries = Vec::new();
    for (ci, c) in checkpoints.iter().enumerate() {
        for (ti, task) in c.tasks.iter().enumerate() {
            let passing = slice
                .students
                .iter()
                .filter(|s| {
                    s.checkpoints
                        .get(ci)
                        .and_then(|cp| cp.outcomes.get(ti))
                        .is_some_and(|o| o.status == Status::Pass)
                })
                .count();
            tasks.push(TaskStat {
                checkpoint_id: c.id.clone(),
                task_id: task.id.clone(),
                passing,
            });
        }
        let mut rates: Vec<f64> = slice
            .students
            .iter()
            .map(|s| s.checkpoints.get(ci).map_or(0.0, |cp| cp.completion))
            .collect();
        rates.sort_by(f64::total_cmp);
        summaries.push(CompletionSummary {
            checkpoint_id: c.id.clone(),
            min: rates.first().copied().unwrap_or(0.0),
            median: median(&rates),
            max: rates.last().copied().unwrap_or(0.0),
        });
    }
    ClassroomStats {
        t_ms: slice.t_ms,
        class_size: slice.students.len(),
        tasks,
        checkpoints: summaries,
    }
}

/// Per-task outcome of checking a checkpoint against reference code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskVerification {
    pub task_id: String,
    pub outcome: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checkpoint_id: String,
    pub tasks: Vec<TaskVerification>,
    /// True iff every task passed.
    pub passed: bool,
}

/// Evaluates `checkpoint` against reference files exactly as a student's
/// snapshot would be evaluated.
pub fn verify_checkpoint(
    checkpoint: &Checkpoint,
    reference: &DocumentSnapshot,
    runner: &dyn Runner,
) -> VerificationReport {
    let progress = evaluate_snapshot(std::slice::from_ref(checkpoint), runner, None, reference);
    let tasks: Vec<TaskVerification> = progress
        .into_iter()
        .flat_map(|c| c.outcomes)
        .map(|o| TaskVerification {
            task_id: o.task_id,
            outcome: o.status,
            detail: o.detail,
        })
        .collect();
    VerificationReport {
        checkpoint_id: checkpoint.id.clone(),
        passed: tasks.iter().all(|t| t.outcome == Status::Pass),
        tasks,
    }
}
