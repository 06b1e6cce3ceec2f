use std::collections::BTreeMap;

use spark_core::checkpoints::{parse_checkpoint_config, verify_checkpoint, Checkpoint};
use spark_core::document_store::{load_workspace, DocumentSnapshot, FileMap};
use spark_core::evaluator::{StaticRunner, Status};
use spark_core::fixtures::{exercise_dir, load_mutations, EXERCISES};

fn checkpoints(exercise: &str) -> Vec<Checkpoint> {
    let text = std::fs::read_to_string(exercise_dir(exercise).join("checkpoints.json")).unwrap();
    let parsed = parse_checkpoint_config(&text).unwrap();
    assert!(parsed.diagnostics.is_empty(), "{exercise}: {:?}", parsed.diagnostics);
    parsed.checkpoints
}

fn reference(exercise: &str) -> FileMap {
    load_workspace(&exercise_dir(exercise).join("reference")).unwrap()
}

/// `checkpoint/task` to status for every task.
fn statuses(cps: &[Checkpoint], files: &FileMap) -> BTreeMap<String, Status> {
    let snap = DocumentSnapshot::new("ref", files.clone(), 0);
    let mut out = BTreeMap::new();
    for cp in cps {
        let report = verify_checkpoint(cp, &snap, &StaticRunner);
        for t in report.tasks {
            out.insert(format!("{}/{}", cp.id, t.task_id), t.outcome);
        }
    }
    out
}

#[test]
fn reference_passes_every_static_task() {
    for ex in EXERCISES {
        let cps = checkpoints(ex);
        for (key, status) in statuses(&cps, &reference(ex)) {
            let task = key.split_once('/').map(|(c, t)| {
                cps.iter().find(|cp| cp.id == c).unwrap().task(t).unwrap()
            });
            let expected = if task.unwrap().requires_runtime() {
                Status::Unsupported
            } else {
                Status::Pass
            };
            assert_eq!(status, expected, "{ex}: {key}");
        }
    }
}

#[test]
fn each_mutation_breaks_exactly_its_task() {
    for ex in EXERCISES {
        let cps = checkpoints(ex);
        let reference = reference(ex);
        let baseline = statuses(&cps, &reference);
        let mutations = load_mutations(&exercise_dir(ex)).unwrap();
        assert!(mutations.len() >= 10, "{ex}: only {} mutations", mutations.len());
        for m in mutations {
            let mutated = m.apply(&reference).unwrap();
            let got = statuses(&cps, &mutated);
            for (key, status) in &got {
                if *key == m.fails {
                    assert_eq!(*status, Status::Fail, "{ex}/{}: {key}", m.name);
                } else {
                    assert_eq!(status, &baseline[key], "{ex}/{}: {key} changed", m.name);
                }
            }
            assert!(got.contains_key(&m.fails), "{ex}/{}: unknown task {}", m.name, m.fails);
        }
    }
}

#[test]
fn mutation_pattern_must_be_unique() {
    let m = spark_core::fixtures::Mutation {
        name: "dup".into(),
        file: "a.css".into(),
        find: "x".into(),
        replace: "y".into(),
        fails: "c/t".into(),
    };
    let files = FileMap::from([("a.css".to_owned(), "x x".to_owned())]);
    assert!(m.apply(&files).is_err());
}
