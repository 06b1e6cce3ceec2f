mod oracle;

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spark_core::checkpoints::parse_checkpoint_config;
use spark_core::classroom::{
    drive_replay, Classroom, ClassroomOptions, InspectResult, LoadedSession, ReplayProgress, SessionConfig,
    SessionError,
};
use spark_core::document_store::{reconstruct_at, ticks, SessionBounds, SnapshotCache};
use spark_core::dom::selector::Selector;
use spark_core::evaluator::{build_progress_matrix, Page, StaticRunner};
use spark_core::event_log::{load_log, DurableLog, LoadError, ReplaySpeed};
use spark_core::fixtures::{exercise_dir, EXERCISES};
use spark_core::inspector::{fingerprint, inspect_property, preview_clusters, students_matching};
use spark_core::par::Execution;
use spark_core::simulate::{simulate_class, SimConfig};

fn session(name: &str) -> LoadedSession {
    LoadedSession::load(&exercise_dir(name).join("session.json")).unwrap()
}

fn sim(seed: u64, students: usize, events: usize) -> SimConfig {
    SimConfig {
        students,
        events_per_student: events,
        seed,
        ..SimConfig::default()
    }
}

fn classroom(s: &LoadedSession, cfg: &SimConfig) -> Classroom {
    let opts = ClassroomOptions {
        start_ms: cfg.session_start_ms,
        end_ms: Some(cfg.session_end_ms()),
        tick_interval_ms: s.config.tick_interval_ms,
        exec: Execution::default(),
    };
    Classroom::new("t", Arc::new(s.exercise.clone()), Arc::new(StaticRunner), opts, DurableLog::in_memory())
}

#[test]
fn fixture_sessions_load() {
    for ex in EXERCISES {
        let s = session(ex);
        assert_eq!(s.config.session_id, ex);
        assert!(s.exercise.reference.is_some());
        assert_eq!(s.exercise.checkpoints.len(), 3);
    }
}

#[test]
fn simulated_logs_replay_cleanly() {
    for ex in EXERCISES {
        let s = session(ex);
        let cfg = sim(11, 5, 300);
        let log = simulate_class(&cfg, &s.exercise.starter, s.exercise.reference.as_ref().unwrap());
        assert_eq!(log.len(), 1500);
        let view = log.view();
        for student in view.students() {
            let end = reconstruct_at(&view, student, cfg.session_end_ms(), &s.exercise.starter).unwrap();
            // students finish on a perturbed copy of the reference
            assert!(end.files["index.html"].contains("<h1"), "{ex}/{student}");
        }
    }
}

#[test]
fn cached_live_and_replayed_agree() {
    let s = session("todo");
    for seed in 0..4 {
        let cfg = sim(seed, 4, 200);
        let log = simulate_class(&cfg, &s.exercise.starter, s.exercise.reference.as_ref().unwrap());
        let view = log.view();
        let ts = ticks(SessionBounds::new(cfg.session_start_ms, cfg.session_end_ms()), 60_000);
        assert_eq!(ts.len(), 21);
        let cache = SnapshotCache::build(&view, &s.exercise.starter, &ts);
        for student in view.students() {
            for &t in &ts {
                let a = cache.reconstruct_at(student, t).unwrap().content_hash;
                let b = reconstruct_at(&view, student, t, &s.exercise.starter).unwrap().content_hash;
                assert_eq!(a, b);
            }
        }

        let replayed = classroom(&s, &cfg);
        drive_replay(&replayed, &view, ReplaySpeed::Max, &ReplayProgress::new()).unwrap();
        let live = classroom(&s, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (clock, batch) in oracle::live_schedule(view.events(), &mut rng, 180_000) {
            assert!(live.ingest(batch).iter().all(|v| v.is_accepted()));
            live.advance_to(clock.min(cfg.session_end_ms()));
        }
        live.finish();
        let a = serde_json::to_vec(&live.matrix()).unwrap();
        let b = serde_json::to_vec(&replayed.matrix()).unwrap();
        assert!(a == b, "seed {seed}: live and replay matrices differ");

        let direct = build_progress_matrix(
            &view,
            &s.exercise.starter,
            &s.exercise.checkpoints,
            &ts,
            &StaticRunner,
            Execution::Sequential,
            None,
        );
        assert_eq!(replayed.matrix(), direct);
    }
}

#[test]
fn unchanged_ticks_skip_the_runner() {
    let s = session("todo");
    let cfg = sim(5, 3, 100);
    let log = simulate_class(&cfg, &s.exercise.starter, s.exercise.reference.as_ref().unwrap());
    let memo = spark_core::evaluator::OutcomeMemo::new();
    let end = cfg.session_end_ms();
    // two ticks after everyone stopped typing
    let view = log.view();
    let last = view.time_span().unwrap().1;
    build_progress_matrix(&view, &s.exercise.starter, &s.exercise.checkpoints, &[last], &StaticRunner, Execution::Sequential, Some(&memo));
    let before = memo.runner_evaluations();
    build_progress_matrix(&view, &s.exercise.starter, &s.exercise.checkpoints, &[end], &StaticRunner, Execution::Sequential, Some(&memo));
    assert_eq!(memo.runner_evaluations(), before);
}

#[test]
fn inspector_partitions_match_pairwise_oracle() {
    for ex in EXERCISES {
        let s = session(ex);
        let cfg = sim(21, 8, 250);
        let log = simulate_class(&cfg, &s.exercise.starter, s.exercise.reference.as_ref().unwrap());
        let c = classroom(&s, &cfg);
        c.ingest(log.iter().cloned().collect());
        let props = c.preview_properties();
        for t in [cfg.session_start_ms + 300_000, cfg.session_start_ms + 700_000, cfg.session_end_ms()] {
            let snaps = c.class_snapshots(t);
            let roster: BTreeSet<String> = snaps.iter().map(|s| s.student_id.clone()).collect();
            for sel in ["#pageTitle", "h1", "#inputContainer", "#thumbnails", "#featured", ".deleteBtn", "body"] {
                for prop in ["font-size", "width", "display", "color"] {
                    let d = inspect_property(&snaps, sel, prop, t, Execution::default()).unwrap();
                    let mut groups: Vec<Vec<String>> = d.values.values().cloned().collect();
                    groups.extend([d.no_match.clone(), d.parse_error.clone()].into_iter().filter(|g| !g.is_empty()));
                    assert!(oracle::is_partition_of(&groups, &roster));
                    assert_eq!(d.class_size(), roster.len());
                }
                let set = preview_clusters(&snaps, None, sel, &props, None, t, Execution::default()).unwrap();
                let groups: Vec<Vec<String>> = set.clusters.iter().map(|c| c.members.clone()).collect();
                assert!(oracle::is_partition_of(&groups, &roster));
                let parsed = Selector::parse(sel).unwrap();
                let keyed: Vec<(String, String)> = snaps
                    .iter()
                    .map(|snap| {
                        let page = Page::load(&snap.files).unwrap();
                        let key = fingerprint(&snap.student_id, &page, &parsed, &props)
                            .map_or_else(|| "\u{0}none".to_owned(), |f| f.serialization);
                        (snap.student_id.clone(), key)
                    })
                    .collect();
                let got: oracle::Partition = groups.iter().map(|g| g.iter().cloned().collect()).collect();
                assert_eq!(got, oracle::pairwise_partition(&keyed), "{ex} {sel} at {t}");
                for cl in &set.clusters {
                    assert_eq!(students_matching(&set, &cl.digest).unwrap(), cl.members);
                }
            }
        }
    }
}

#[test]
fn inspect_dispatches_on_property() {
    let s = session("todo");
    let cfg = sim(2, 3, 150);
    let log = simulate_class(&cfg, &s.exercise.starter, s.exercise.reference.as_ref().unwrap());
    let c = classroom(&s, &cfg);
    c.ingest(log.iter().cloned().collect());
    let t = cfg.session_end_ms();
    assert!(matches!(c.inspect(Some("title_style"), "#pageTitle", Some("font-size"), t), Ok(InspectResult::Distribution(_))));
    assert!(matches!(c.inspect(Some("structure/title"), "#pageTitle", None, t), Ok(InspectResult::Clusters(_))));
    assert!(c.inspect(Some("nope"), "#pageTitle", None, t).is_err());
}

#[test]
fn invalid_sessions_are_typed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert!(matches!(LoadedSession::load(&path), Err(SessionError::Format { .. })));
    std::fs::write(&path, r#"{"session_id":"x","starter_dir":"nowhere","checkpoints":"c.json"}"#).unwrap();
    assert!(matches!(LoadedSession::load(&path), Err(SessionError::Io { .. })));
    std::fs::create_dir(dir.path().join("starter")).unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"checkpoints": [{"id": "a", "title": "A", "tasks": []}]}"#).unwrap();
    std::fs::write(&path, r#"{"session_id":"x","starter_dir":"starter","checkpoints":"c.json"}"#).unwrap();
    match LoadedSession::load(&path) {
        Err(SessionError::Checkpoints(e)) => assert!(e.to_string().starts_with("ConfigError")),
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, r#"{"session_id":"x","starter_dir":"starter","checkpoints":"c.json","tick_interval_ms":0}"#).unwrap();
    assert!(matches!(LoadedSession::load(&path), Err(SessionError::Invalid(_))));
    std::fs::write(&path, r#"{"session_id":"x","starter_dir":"starter","checkpoints":"c.json","surprise":1}"#).unwrap();
    assert!(matches!(LoadedSession::load(&path), Err(SessionError::Format { .. })));
}

#[test]
fn session_config_round_trips() {
    let mut cfg = SessionConfig::new("todo", "starter", "checkpoints.json");
    cfg.reference_dir = Some("reference".into());
    cfg.session_start_ms = Some(5);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<SessionConfig>(&text).unwrap(), cfg);
    let on_disk = std::fs::read_to_string(exercise_dir("todo").join("session.json")).unwrap();
    let parsed: SessionConfig = serde_json::from_str(&on_disk).unwrap();
    assert_eq!(serde_json::from_str::<SessionConfig>(&serde_json::to_string(&parsed).unwrap()).unwrap(), parsed);
}

#[test]
fn corrupted_log_line_is_located() {
    let s = session("todo");
    let log = simulate_class(&sim(1, 2, 20), &s.exercise.starter, s.exercise.reference.as_ref().unwrap());
    let mut bytes = Vec::new();
    log.write_to(&mut bytes).unwrap();
    let mut text = String::from_utf8(bytes).unwrap();
    let back = load_log(text.as_bytes()).unwrap();
    assert_eq!(back, log);
    let third = text.match_indices('\n').nth(1).unwrap().0 + 1;
    text.insert_str(third, "{\"student_id\": 3}\n");
    match load_log(text.as_bytes()) {
        Err(LoadError::Format { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn fixture_configs_have_no_diagnostics() {
    for ex in EXERCISES {
        let text = std::fs::read_to_string(exercise_dir(ex).join("checkpoints.json")).unwrap();
        assert!(parse_checkpoint_config(&text).unwrap().diagnostics.is_empty());
    }
}
