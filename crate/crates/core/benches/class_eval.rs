use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use spark_core::checkpoints::parse_checkpoint_config;
use spark_core::document_store::{load_workspace, ticks, SessionBounds};
use spark_core::evaluator::{build_progress_matrix, StaticRunner};
use spark_core::fixtures::exercise_dir;
use spark_core::par::Execution;
use spark_core::simulate::{simulate_class, SimConfig};

fn full_session(c: &mut Criterion) {
    let dir = exercise_dir("todo");
    let starter = load_workspace(&dir.join("starter")).unwrap();
    let reference = load_workspace(&dir.join("reference")).unwrap();
    let text = std::fs::read_to_string(dir.join("checkpoints.json")).unwrap();
    let checkpoints = parse_checkpoint_config(&text).unwrap().checkpoints;
    let cfg = SimConfig::default();
    let view = simulate_class(&cfg, &starter, &reference).view();
    let ts = ticks(SessionBounds::new(cfg.session_start_ms, cfg.session_end_ms()), 60_000);

    let mut group = c.benchmark_group("progress_matrix_22x810");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| {
            b.iter(|| {
                black_box(build_progress_matrix(
                    &view,
                    &starter,
                    &checkpoints,
                    &ts,
                    &StaticRunner,
                    exec,
                    None,
                ))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, full_session);
criterion_main!(benches);
