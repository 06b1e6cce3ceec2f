//! Seeded synthetic classes: every student types a perturbed copy of the
//! reference solution into the starter files, one keystroke-level event at
//! a time, spread over the session.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::document_store::{apply_edit_in_place, FileMap, MINUTE_MS};
use crate::event_log::{EditEvent, EventLog};

pub const DEFAULT_STUDENTS: usize = 22;
pub const DEFAULT_EVENTS_PER_STUDENT: usize = 810;
pub const DEFAULT_START_MS: i64 = 1_700_000_000_000;
pub const DEFAULT_DURATION_MS: i64 = 20 * MINUTE_MS;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub students: usize,
    pub events_per_student: usize,
    pub seed: u64,
    pub session_id: String,
    pub session_start_ms: i64,
    pub duration_ms: i64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            students: DEFAULT_STUDENTS,
            events_per_student: DEFAULT_EVENTS_PER_STUDENT,
            seed: 0,
            session_id: "sim".into(),
            session_start_ms: DEFAULT_START_MS,
            duration_ms: DEFAULT_DURATION_MS,
        }
    }
}

impl SimConfig {
    pub fn session_end_ms(&self) -> i64 {
        self.session_start_ms + self.duration_ms
    }
}

pub fn student_id(index: usize, class_size: usize) -> String {
    let width = class_size.to_string().len().max(2);
    format!("s{:0width$}", index + 1)
}

/// Swaps applied to stylesheet words with small probability.
const WORD_SWAPS: &[(&str, &str)] = &[
    ("red", "blue"),
    ("darkred", "maroon"),
    ("center", "flex-start"),
    ("space-between", "space-around"),
    ("bold", "normal"),
    ("flex", "block"),
];

const LENGTH_NUDGES: &[i64] = &[-10, -5, -1, 1, 5, 20];

fn perturb_css(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find(|c: char| c.is_ascii_alphanumeric() || c == '-') {
        out.push_str(&rest[..start]);
        rest = &rest[start..];
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
            .unwrap_or(rest.len());
        let word = &rest[..end];
        rest = &rest[end..];
        let px = word
            .strip_suffix("px")
            .and_then(|n| n.parse::<i64>().ok());
        let replacement = if let Some(n) = px {
            rng.gen_bool(0.12).then(|| {
                let nudge = *LENGTH_NUDGES.choose(rng).expect("non-empty");
                format!("{}px", (n + nudge).max(0))
            })
        } else if let Some((_, to)) = WORD_SWAPS.iter().find(|(from, _)| *from == word) {
            rng.gen_bool(0.08).then(|| (*to).to_owned())
        } else {
            None
        };
        out.push_str(replacement.as_deref().unwrap_or(word));
    }
    out.push_str(rest);
    out
}

/// The reference with a few stylesheet values nudged.
pub fn perturb(reference: &FileMap, rng: &mut ChaCha8Rng) -> FileMap {
    reference
        .iter()
        .map(|(path, text)| {
            let text = if path.ends_with(".css") {
                perturb_css(text, rng)
            } else {
                text.clone()
            };
            (path.clone(), text)
        })
        .collect()
}

fn file_rank(path: &str) -> u8 {
    if path.ends_with(".html") {
        0
    } else if path.ends_with(".css") {
        1
    } else if path.ends_with(".js") {
        2
    } else {
        3
    }
}

/// One file's edit: delete `old_len` scalars at `at`, then type `new`.
struct FileEdit {
    path: String,
    at: usize,
    old_len: usize,
    new: Vec<char>,
}

fn plan_edits(starter: &FileMap, target: &FileMap) -> Vec<FileEdit> {
    let mut paths: Vec<&String> = starter.keys().chain(target.keys()).collect();
    paths.sort_by_key(|p| (file_rank(p), p.as_str()));
    paths.dedup();
    let mut edits = Vec::new();
    for path in paths {
        let old: Vec<char> = starter.get(path).map_or_else(Vec::new, |t| t.chars().collect());
        let new: Vec<char> = target.get(path).map_or_else(Vec::new, |t| t.chars().collect());
        let prefix = old.iter().zip(&new).take_while(|(a, b)| a == b).count();
        let max_suffix = old.len().min(new.len()) - prefix;
        let suffix = old
            .iter()
            .rev()
            .zip(new.iter().rev())
            .take(max_suffix)
            .take_while(|(a, b)| a == b)
            .count();
        let old_len = old.len() - prefix - suffix;
        let middle: Vec<char> = new[prefix..new.len() - suffix].to_vec();
        if old_len > 0 || !middle.is_empty() {
            edits.push(FileEdit {
                path: path.clone(),
                at: prefix,
                old_len,
                new: middle,
            });
        }
    }
    edits
}

/// (path, offset, delete_count, insert_text) in typing order, exactly
/// `budget` long.
fn keystrokes(edits: &[FileEdit], budget: usize, rng: &mut ChaCha8Rng) -> Vec<(String, usize, usize, String)> {
    let mut out = Vec::with_capacity(budget);
    let mut remaining_chars: usize = edits.iter().map(|e| e.new.len()).sum();
    let mut cursor_path = edits.first().map_or_else(|| "index.html".to_owned(), |e| e.path.clone());
    let mut cursor = edits.first().map_or(0, |e| e.at);
    for edit in edits {
        if out.len() == budget {
            break;
        }
        cursor_path = edit.path.clone();
        cursor = edit.at;
        if edit.old_len > 0 {
            out.push((edit.path.clone(), edit.at, edit.old_len, String::new()));
        }
        let mut typed = 0;
        while typed < edit.new.len() && out.len() < budget {
            let left = budget - out.len();
            let surplus = left.saturating_sub(remaining_chars);
            if surplus >= 2 && left >= 3 && rng.gen_bool((surplus as f64 / left as f64).min(0.5)) {
                let typo = (b'a' + rng.gen_range(0..26u8)) as char;
                out.push((edit.path.clone(), cursor, 0, typo.to_string()));
                out.push((edit.path.clone(), cursor, 1, String::new()));
                continue;
            }
            let lo = remaining_chars.div_ceil(left).max(1);
            let hi = lo.max(3).min(edit.new.len() - typed);
            let size = if lo >= hi { hi } else { rng.gen_range(lo..=hi) };
            let chunk: String = edit.new[typed..typed + size].iter().collect();
            out.push((edit.path.clone(), cursor, 0, chunk));
            typed += size;
            cursor += size;
            remaining_chars -= size;
        }
    }
    // Idle tinkering once the work is typed: a typo and its correction.
    while budget - out.len() >= 2 {
        let typo = (b'a' + rng.gen_range(0..26u8)) as char;
        out.push((cursor_path.clone(), cursor, 0, typo.to_string()));
        out.push((cursor_path.clone(), cursor, 1, String::new()));
    }
    if out.len() < budget {
        out.push((cursor_path, cursor, 0, "\n".to_owned()));
    }
    out
}

/// Nondecreasing timestamps for `n` events inside `[start, end]`.
fn timestamps(n: usize, start: i64, end: i64, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.8)).collect();
    let total: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let span = (end - start) as f64;
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            start + ((acc / total) * span).floor() as i64
        })
        .map(|t| t.min(end))
        .collect()
}

/// One student's events and the files they end up with.
pub fn simulate_student(
    index: usize,
    cfg: &SimConfig,
    starter: &FileMap,
    reference: &FileMap,
) -> (Vec<EditEvent>, FileMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
    let target = perturb(reference, &mut rng);
    let edits = plan_edits(starter, &target);
    let strokes = keystrokes(&edits, cfg.events_per_student, &mut rng);
    let lead = (cfg.duration_ms / 10).max(0);
    let start = cfg.session_start_ms + rng.gen_range(0..=lead);
    let end = cfg.session_end_ms() - rng.gen_range(0..=2 * lead);
    let times = timestamps(strokes.len(), start, end.max(start), &mut rng);
    let student = student_id(index, cfg.students);
    let mut files = starter.clone();
    let events = strokes
        .into_iter()
        .zip(times)
        .enumerate()
        .map(|(i, ((path, offset, delete_count, insert_text), t))| {
            let text = files.entry(path.clone()).or_default();
            apply_edit_in_place(text, offset, delete_count, &insert_text)
                .expect("simulated edits stay in bounds");
            EditEvent {
                student_id: student.clone(),
                session_id: cfg.session_id.clone(),
                file_path: path,
                offset,
                delete_count,
                insert_text,
                timestamp_ms: t,
                seq: i as u64 + 1,
            }
        })
        .collect();
    (events, files)
}

/// The whole class as one log, in ordering-key order.
pub fn simulate_class(cfg: &SimConfig, starter: &FileMap, reference: &FileMap) -> EventLog {
    let mut events: Vec<EditEvent> = (0..cfg.students)
        .flat_map(|i| simulate_student(i, cfg, starter, reference).0)
        .collect();
    events.sort_by(|a, b| a.ordering_key().cmp(&b.ordering_key()));
    let mut log = EventLog::new();
    for e in events {
        log.append(e).expect("simulated keys are unique");
    }
    log
}
