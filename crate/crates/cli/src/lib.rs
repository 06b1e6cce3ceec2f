//! Subcommands of the `spark` binary. Each one is also callable as a plain
//! function so tests can compare its results with the HTTP service.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::RngCore;
use serde_json::Value;

use spark_core::classroom::{drive_replay, verify_against, Classroom, LoadedSession, ReplayProgress};
use spark_core::evaluator::{classroom_stats, ProgressMatrix, Status, VerificationReport};
use spark_core::event_log::{load_log_file, EventLog, ReplaySpeed};
use spark_core::fixtures::exercise_dir;
use spark_core::simulate::{simulate_class, SimConfig, DEFAULT_EVENTS_PER_STUDENT, DEFAULT_STUDENTS};
use spark_server::{AppState, ServerOptions};

pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "spark", version, about = "Live classroom monitoring for web-programming exercises")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service for a session.
    Serve(ServeArgs),
    /// Replay a recorded log and write the final progress matrix.
    Replay(ReplayArgs),
    /// Check that the reference solution passes its own checkpoints.
    Verify(VerifyArgs),
    /// Generate a synthetic class log.
    Simulate(SimulateArgs),
    /// Export per-tick pass counts as CSV.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "max")]
    pub speed: ReplaySpeed,
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Count tasks the runner cannot evaluate as failures.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = DEFAULT_STUDENTS)]
    pub students: usize,
    #[arg(long, default_value_t = DEFAULT_EVENTS_PER_STUDENT)]
    pub events_per_student: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Session whose starter and reference are typed; the bundled To-Do
    /// exercise when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure of a subcommand: bad input, or a check that did not hold.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Usage(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "{e:#}"),
            CliError::Failed(m) => f.write_str(m),
        }
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Serve(a) => cmd_serve(&a),
        Command::Replay(a) => cmd_replay(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Stats(a) => cmd_stats(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spark: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn load_session(path: &Path) -> anyhow::Result<LoadedSession> {
    let session = LoadedSession::load(path).with_context(|| format!("loading session {}", path.display()))?;
    for d in &session.exercise.diagnostics {
        tracing::warn!("{d}");
    }
    Ok(session)
}

/// Replays `log` through a fresh classroom at `speed` and returns the
/// matrix over every published tick.
pub fn replay_log(session: &LoadedSession, log: &EventLog, speed: ReplaySpeed) -> anyhow::Result<ProgressMatrix> {
    let view = log.view();
    let first = view.time_span().map_or(0, |(s, _)| s);
    let runner = session.runner()?;
    let classroom = Classroom::for_session(session, runner, first, false)?;
    drive_replay(&classroom, &view, speed, &ReplayProgress::new())?;
    Ok(classroom.matrix())
}

fn load_log(path: &Path) -> anyhow::Result<EventLog> {
    load_log_file(path).with_context(|| format!("loading log {}", path.display()))
}

fn cmd_replay(a: &ReplayArgs) -> Result<(), CliError> {
    let session = load_session(&a.config)?;
    let log = load_log(&a.log)?;
    let matrix = replay_log(&session, &log, a.speed)?;
    let text = serde_json::to_string_pretty(&matrix).map_err(anyhow::Error::from)?;
    match &a.out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    tracing::info!(ticks = matrix.ticks.len(), students = matrix.students.len(), "replay complete");
    Ok(())
}

/// Verifies one checkpoint, or all of them. Unknown ids are a usage error.
pub fn verify_session(session: &LoadedSession, checkpoint: Option<&str>) -> anyhow::Result<Vec<VerificationReport>> {
    let runner = session.runner()?;
    let ids: Vec<String> = match checkpoint {
        Some(id) => vec![id.to_owned()],
        None => session.exercise.checkpoints.iter().map(|c| c.id.clone()).collect(),
    };
    ids.iter()
        .map(|id| verify_against(&session.exercise, id, runner.as_ref()).map_err(|e| anyhow!("{e}")))
        .collect()
}

/// Tasks that keep the reports from passing, as `checkpoint/task`.
pub fn failing_tasks(reports: &[VerificationReport], strict: bool) -> Vec<String> {
    reports
        .iter()
        .flat_map(|r| {
            r.tasks
                .iter()
                .filter(move |t| match t.outcome {
                    Status::Pass => false,
                    Status::Unsupported => strict,
                    _ => true,
                })
                .map(move |t| format!("{}/{}", r.checkpoint_id, t.task_id))
        })
        .collect()
}

fn cmd_verify(a: &VerifyArgs) -> Result<(), CliError> {
    let session = load_session(&a.config)?;
    let reports = verify_session(&session, a.checkpoint.as_deref())?;
    let json = serde_json::to_string_pretty(&reports).map_err(anyhow::Error::from)?;
    println!("{json}");
    for r in &reports {
        for t in &r.tasks {
            eprintln!("{:?}\t{}/{}\t{}", t.outcome, r.checkpoint_id, t.task_id, t.detail);
        }
    }
    let failing = failing_tasks(&reports, a.strict);
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failing tasks: {}", failing.join(", "))))
    }
}

pub fn simulate_to(a: &SimulateArgs) -> anyhow::Result<EventLog> {
    let (session, mut cfg) = match &a.config {
        Some(path) => {
            let s = load_session(path)?;
            let cfg = SimConfig {
                session_id: s.config.session_id.clone(),
                ..SimConfig::default()
            };
            (s, cfg)
        }
        None => (load_session(&exercise_dir("todo").join("session.json"))?, SimConfig::default()),
    };
    cfg.students = a.students;
    cfg.events_per_student = a.events_per_student;
    cfg.seed = a.seed;
    if let Some(start) = session.config.session_start_ms {
        cfg.session_start_ms = start;
    }
    let reference = session
        .exercise
        .reference
        .as_ref()
        .ok_or_else(|| anyhow!("session has no reference_dir to simulate"))?;
    Ok(simulate_class(&cfg, &session.exercise.starter, reference))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let log = simulate_to(a)?;
    log.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    tracing::info!(events = log.len(), "simulated log written");
    Ok(())
}

/// One CSV row per published tick and task.
pub fn stats_rows(session: &LoadedSession, matrix: &ProgressMatrix) -> Vec<(i64, String, usize, usize)> {
    let mut rows = Vec::new();
    for slice in &matrix.ticks {
        let stats = classroom_stats(slice, &session.exercise.checkpoints);
        for t in stats.tasks {
            rows.push((
                stats.t_ms,
                format!("{}/{}", t.checkpoint_id, t.task_id),
                t.passing,
                stats.class_size,
            ));
        }
    }
    rows
}

pub fn write_stats_csv<W: Write>(out: W, rows: &[(i64, String, usize, usize)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_ms", "task_id", "passing", "class_size"])?;
    for (t, task, passing, size) in rows {
        w.write_record([t.to_string(), task.clone(), passing.to_string(), size.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> Result<(), CliError> {
    let session = load_session(&a.config)?;
    let log = load_log(&a.log)?;
    let matrix = replay_log(&session, &log, ReplaySpeed::Max)?;
    let rows = stats_rows(&session, &matrix);
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_stats_csv(io::BufWriter::new(file), &rows)?;
    Ok(())
}

/// The shared secret for monitor routes: `SPARK_TOKEN`, or a fresh random
/// one that is printed once.
pub fn resolve_token() -> String {
    match std::env::var("SPARK_TOKEN") {
        Ok(t) if !t.is_empty() => t,
        _ => {
            let mut bytes = [0u8; 16];
            rand::thread_rng().fill_bytes(&mut bytes);
            let token: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
            eprintln!("SPARK_TOKEN not set; using generated token {token}");
            token
        }
    }
}

fn cmd_serve(a: &ServeArgs) -> Result<(), CliError> {
    let session = load_session(&a.config)?;
    let runner = session.runner().map_err(anyhow::Error::from)?;
    let state = AppState::new(session, runner, ServerOptions::new(resolve_token())).map_err(anyhow::Error::from)?;
    let rt = tokio::runtime::Runtime::new().map_err(anyhow::Error::from)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", a.port))
            .await
            .with_context(|| format!("binding port {}", a.port))?;
        tracing::info!(addr = %listener.local_addr()?, "serving");
        spark_server::serve(listener, state).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}

/// Reports as the JSON value `verify` prints.
pub fn reports_json(reports: &[VerificationReport]) -> Value {
    serde_json::to_value(reports).expect("reports serialize")
}
