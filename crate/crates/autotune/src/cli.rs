//! The `autotune` binary: a thin wrapper over the library.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 RPI violation, 3 runtime
//! error.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::agent::{run_episode, Episode};
use crate::benchmarks::build_workbench;
use crate::config::{ConfigError, ExperimentConfig};
use crate::experiment::{
    load_runs, new_run_id, report, ObjectiveRecord, Report, RunFilter, RunRecord, RunStore,
    SCHEMA_VERSION,
};
use crate::rpi::{learn_envelope, rpi_gate, RpiEnvelope, RpiError};
use crate::telemetry::{counter_delta, sample_counters, MetricCollector};
use crate::tunables::TunableAssignment;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RPI_VIOLATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser)]
#[command(
    name = "autotune",
    version,
    about = "Black-box auto-tuning: run experiments, optimize tunables, gate on resource envelopes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment at the config's default (or explicit) assignment
    /// and print the run record.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a full optimization episode, appending every run to the
    /// config's `out` store.
    Optimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize a run store: best per episode and convergence traces.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
    /// Learn and check resource/performance envelopes.
    Rpi {
        #[command(subcommand)]
        action: RpiAction,
    },
    /// Standalone agent: create a transport, await a component handshake,
    /// and print aggregated telemetry.
    Agent {
        #[arg(long)]
        transport: PathBuf,
        /// Ring capacity in 1024-byte slots (power of two).
        #[arg(long, default_value_t = 64)]
        capacity: u32,
        /// Seconds to wait for registration.
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
        /// Seconds of telemetry to collect after the handshake.
        #[arg(long, default_value_t = 10)]
        duration_secs: u64,
    },
}

#[derive(Subcommand)]
enum RpiAction {
    /// Learn an envelope from a store of runs.
    Learn {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value_t = 0.10)]
        margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gate a store of runs against one or more envelope files.
    Check {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long = "rpi", required = true)]
        rpi: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
    Csv,
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Optimize { config } => cmd_optimize(&config),
        Command::Report { runs, format } => cmd_report(&runs, format),
        Command::Rpi { action } => match action {
            RpiAction::Learn { runs, margin, out } => cmd_rpi_learn(&runs, margin, &out),
            RpiAction::Check { runs, rpi } => cmd_rpi_check(&runs, &rpi),
        },
        Command::Agent {
            transport,
            capacity,
            timeout_secs,
            duration_secs,
        } => cmd_agent(&transport, capacity, timeout_secs, duration_secs),
    }
}

fn fail(code: i32, message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    code
}

fn load_config(path: &Path) -> Result<ExperimentConfig, i32> {
    ExperimentConfig::load(path).map_err(|e| fail(EXIT_USAGE, e))
}

fn cmd_run(config_path: &Path) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let space = match config.load_space() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let mut workbench = match build_workbench(&config.benchmark, &config.workload) {
        Ok(w) => w,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let space = space.unwrap_or_else(|| workbench.spec().clone());

    // explicit assignment entries overlay the declared defaults
    let mut assignment: TunableAssignment = space.default_assignment();
    if let Some(explicit) = &config.assignment {
        for (name, value) in explicit {
            assignment.set(name, value.clone());
        }
    }
    if let Err(violations) = crate::tunables::validate_assignment(&space, &assignment) {
        for v in &violations {
            eprintln!("error: {v}");
        }
        return EXIT_USAGE;
    }
    if let Err(e) = workbench.apply(&assignment) {
        return fail(EXIT_RUNTIME, e);
    }

    let before = sample_counters();
    let mut collector = MetricCollector::new();
    if let Err(e) = workbench.run(&mut collector) {
        return fail(EXIT_RUNTIME, e);
    }
    let counters = counter_delta(&before, &sample_counters());

    let spec = workbench.spec();
    let metrics: Vec<_> = collector
        .finish()
        .iter()
        .filter_map(|aggregate| {
            spec.metric_by_id(aggregate.metric_id).map(|def| {
                crate::experiment::RecordedMetric::from_aggregate(aggregate, &def.name, &def.unit)
            })
        })
        .collect();
    let Some(metric_def) = spec.metric_by_name(&config.objective.metric) else {
        return fail(
            EXIT_USAGE,
            format!("objective metric `{}` not declared", config.objective.metric),
        );
    };
    let Some(recorded) = metrics.iter().find(|m| m.metric_id == metric_def.metric_id) else {
        return fail(
            EXIT_RUNTIME,
            format!("run produced no `{}` events", config.objective.metric),
        );
    };
    let aggregate = crate::telemetry::MetricAggregate {
        metric_id: recorded.metric_id,
        count: recorded.count,
        sum: recorded.sum,
        min: recorded.min,
        max: recorded.max,
        p50: recorded.p50,
        p95: recorded.p95,
        p99: recorded.p99,
    };
    let value = config
        .objective
        .aggregate
        .extract(&aggregate, counters.wall_ns);

    let record = RunRecord {
        run_id: new_run_id(),
        episode_id: config.episode_id(),
        iteration: 0,
        timestamp_utc: chrono::Utc::now(),
        benchmark: config.benchmark.clone(),
        workload: config.workload.clone(),
        assignment: assignment.values.clone(),
        objective: ObjectiveRecord {
            metric: config.objective.metric.clone(),
            direction: config.objective.direction,
            aggregate: config.objective.aggregate,
            value,
        },
        metrics,
        counters,
        optimizer: config.optimizer.record(),
        schema_version: SCHEMA_VERSION,
    };

    if let Some(out) = &config.out {
        let mut store = match RunStore::open(out) {
            Ok(s) => s,
            Err(e) => return fail(EXIT_RUNTIME, e),
        };
        if let Err(e) = store.append(&record) {
            return fail(EXIT_RUNTIME, e);
        }
    }
    match serde_json::to_string(&record) {
        Ok(line) => println!("{line}"),
        Err(e) => return fail(EXIT_RUNTIME, e),
    }
    EXIT_OK
}

fn cmd_optimize(config_path: &Path) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let Some(budget) = config.optimizer.budget else {
        return fail(EXIT_USAGE, ConfigError::MissingBudget);
    };
    let Some(out) = &config.out else {
        return fail(EXIT_USAGE, "optimize needs an `out` store path in the config");
    };
    let space = match config.load_space() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let mut workbench = match build_workbench(&config.benchmark, &config.workload) {
        Ok(w) => w,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let episode = Episode {
        episode_id: config.episode_id(),
        benchmark: config.benchmark.clone(),
        workload: config.workload.clone(),
        objective: config.objective.clone(),
        budget,
        optimizer: config.optimizer.record(),
        space,
    };
    let mut store = match RunStore::open(out) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let results = match run_episode(&episode, workbench.as_mut(), &mut store) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let best = results.iter().min_by(|a, b| {
        a.canonical_objective
            .partial_cmp(&b.canonical_objective)
            .expect("objectives are finite")
    });
    if let Some(best) = best {
        println!(
            "episode {} finished: {} runs, best {} = {} at iteration {}",
            episode.episode_id,
            results.len(),
            episode.objective.metric,
            best.objective_value,
            best.iteration
        );
        match serde_json::to_string(&best.assignment.values) {
            Ok(line) => println!("best assignment: {line}"),
            Err(e) => return fail(EXIT_RUNTIME, e),
        }
    } else {
        println!("episode {} finished: 0 runs", episode.episode_id);
    }
    EXIT_OK
}

fn render_table(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<34} {:<10} {:<4} {:<13} {:>5} {:>6}  {}\n",
        "episode", "benchmark", "opt", "strategy", "runs", "best@", "best"
    ));
    for e in &report.episodes {
        out.push_str(&format!(
            "{:<34} {:<10} {:<4} {:<13} {:>5} {:>6}  {}\n",
            e.episode_id,
            e.benchmark,
            e.optimizer_kind.to_string(),
            e.strategy.to_string(),
            e.runs,
            e.best_iteration,
            e.best_objective
        ));
        if let Ok(assignment) = serde_json::to_string(&e.best_assignment) {
            out.push_str(&format!("  best assignment: {assignment}\n"));
        }
    }
    out
}

fn render_csv(runs: &[RunRecord], report: &Report) -> String {
    let mut out = String::from("episode_id,benchmark,optimizer,strategy,iteration,objective,best_so_far\n");
    for e in &report.episodes {
        let episode_runs: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| r.episode_id == e.episode_id)
            .collect();
        for (run, best_so_far) in episode_runs.iter().zip(&e.trace) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.episode_id,
                run.benchmark,
                run.optimizer.kind,
                run.optimizer.strategy,
                run.iteration,
                run.objective.value,
                best_so_far
            ));
        }
    }
    out
}

fn cmd_report(runs_path: &Path, format: ReportFormat) -> i32 {
    let (runs, load_report) = match load_runs(runs_path, &RunFilter::default()) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    if load_report.warning_count() > 0 {
        eprintln!(
            "warning: {} invalid lines, {} unknown-schema records{}",
            load_report.invalid_lines,
            load_report.unknown_schema,
            if load_report.truncated_tail {
                ", truncated final line ignored"
            } else {
                ""
            }
        );
    }
    let report = match report(&runs) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    match format {
        ReportFormat::Table => print!("{}", render_table(&report)),
        ReportFormat::Json => match serde_json::to_string_pretty(&report) {
            Ok(text) => println!("{text}"),
            Err(e) => return fail(EXIT_RUNTIME, e),
        },
        ReportFormat::Csv => print!("{}", render_csv(&runs, &report)),
    }
    EXIT_OK
}

fn cmd_rpi_learn(runs_path: &Path, margin: f64, out: &Path) -> i32 {
    let (runs, _) = match load_runs(runs_path, &RunFilter::default()) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let envelope = match learn_envelope(&runs, margin) {
        Ok(envelope) => envelope,
        Err(RpiError::BadMargin) => return fail(EXIT_USAGE, RpiError::BadMargin),
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let text = match serde_json::to_string_pretty(&envelope) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    if let Err(e) = std::fs::write(out, text + "\n") {
        return fail(EXIT_RUNTIME, e);
    }
    println!(
        "learned envelope for ({}, {}) from {} runs (margin {margin})",
        envelope.component,
        envelope.workload,
        runs.len()
    );
    EXIT_OK
}

fn cmd_rpi_check(runs_path: &Path, rpi_paths: &[PathBuf]) -> i32 {
    let (runs, _) = match load_runs(runs_path, &RunFilter::default()) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let mut envelopes = Vec::new();
    for path in rpi_paths {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(EXIT_RUNTIME, format!("{}: {e}", path.display())),
        };
        let envelope: RpiEnvelope = match serde_json::from_str(&text) {
            Ok(envelope) => envelope,
            Err(e) => return fail(EXIT_RUNTIME, format!("{}: {e}", path.display())),
        };
        if let Err(e) = envelope.validate() {
            return fail(EXIT_RUNTIME, format!("{}: {e}", path.display()));
        }
        envelopes.push(envelope);
    }
    let gate = rpi_gate(&envelopes, &runs);
    print!("{}", gate.render());
    gate.exit_code()
}

#[cfg(unix)]
fn cmd_agent(transport: &Path, capacity: u32, timeout_secs: u64, duration_secs: u64) -> i32 {
    use crate::channel::Transport;

    let t = match Transport::create(transport, capacity) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let mut channel = match t.into_agent() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    println!(
        "agent: transport {} ready (capacity {capacity}), waiting for registration",
        transport.display()
    );
    let spec = match crate::agent::handshake(&mut channel, Duration::from_secs(timeout_secs)) {
        Ok(spec) => spec,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    println!(
        "agent: component `{}` registered ({} tunables, {} metrics)",
        spec.name,
        spec.tunables.len(),
        spec.metrics.len()
    );
    let mut collector = MetricCollector::new();
    let received = match crate::agent::collect_window(
        &mut channel,
        &mut collector,
        Duration::from_secs(duration_secs),
    ) {
        Ok(n) => n,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    println!("agent: {received} events in {duration_secs}s");
    for aggregate in collector.finish() {
        let name = spec
            .metric_by_id(aggregate.metric_id)
            .map(|m| m.name.as_str())
            .unwrap_or("?");
        println!(
            "  {name}: count {} mean {:.3} min {:.3} p50 {:.3} p99 {:.3} max {:.3}",
            aggregate.count,
            aggregate.mean(),
            aggregate.min,
            aggregate.p50,
            aggregate.p99,
            aggregate.max
        );
    }
    EXIT_OK
}

#[cfg(not(unix))]
fn cmd_agent(_transport: &Path, _capacity: u32, _timeout_secs: u64, _duration_secs: u64) -> i32 {
    fail(EXIT_RUNTIME, "the mmap transport requires unix")
}
