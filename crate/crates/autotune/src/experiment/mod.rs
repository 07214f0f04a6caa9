//! Append-only experiment store and reporting.
//!
//! Every run becomes one serialized JSON object on one line of the store
//! file. Appends never rewrite existing bytes and are flushed before
//! returning, so a crash can at worst leave a partial final line, which
//! loading ignores with a warning. The records carry enough provenance
//! (assignment, objective, optimizer seed/strategy) that replaying a store
//! through the optimizer reproduces the suggestion sequence.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{OptimizerKind, StrategyMode};
use crate::telemetry::{CounterDelta, MetricAggregate};
use crate::tunables::TunableValue;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("store serialization: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("cannot report on an empty run set")]
    EmptyReport,
}

/// Objective orientation as the user declared it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// Canonical (minimize-direction) view of a user-facing value.
    pub fn canonical(&self, value: f64) -> f64 {
        match self {
            Direction::Minimize => value,
            Direction::Maximize => -value,
        }
    }

    /// Back from canonical to the user's orientation.
    pub fn user_facing(&self, canonical: f64) -> f64 {
        self.canonical(canonical)
    }
}

/// Which aggregate field of the objective metric becomes the objective
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregateField {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "p50")]
    P50,
    #[serde(rename = "p95")]
    P95,
    #[serde(rename = "p99")]
    P99,
    #[serde(rename = "sum")]
    Sum,
    /// Events per second of run wall time.
    #[serde(rename = "count-rate")]
    CountRate,
}

impl AggregateField {
    pub fn extract(&self, aggregate: &MetricAggregate, wall_ns: u64) -> f64 {
        match self {
            AggregateField::Mean => aggregate.mean(),
            AggregateField::P50 => aggregate.p50,
            AggregateField::P95 => aggregate.p95,
            AggregateField::P99 => aggregate.p99,
            AggregateField::Sum => aggregate.sum,
            AggregateField::CountRate => {
                aggregate.count as f64 / (wall_ns.max(1) as f64 / 1e9)
            }
        }
    }
}

/// Objective block of a run record: what was asked plus the user-facing
/// value it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRecord {
    pub metric: String,
    pub direction: Direction,
    pub aggregate: AggregateField,
    pub value: f64,
}

impl ObjectiveRecord {
    pub fn canonical_value(&self) -> f64 {
        self.direction.canonical(self.value)
    }
}

/// One metric's aggregates with its declaration joined in, so records stay
/// self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedMetric {
    pub metric_id: u32,
    pub name: String,
    pub unit: String,
    pub count: u64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl RecordedMetric {
    pub fn from_aggregate(aggregate: &MetricAggregate, name: &str, unit: &str) -> Self {
        RecordedMetric {
            metric_id: aggregate.metric_id,
            name: name.to_string(),
            unit: unit.to_string(),
            count: aggregate.count,
            sum: aggregate.sum,
            min: aggregate.min,
            max: aggregate.max,
            p50: aggregate.p50,
            p95: aggregate.p95,
            p99: aggregate.p99,
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// Optimizer provenance: everything needed to replay the suggestion
/// sequence from the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRecord {
    pub kind: OptimizerKind,
    pub seed: u64,
    pub strategy: StrategyMode,
    #[serde(default = "default_slice")]
    pub slice: usize,
}

fn default_slice() -> usize {
    crate::optimizer::DEFAULT_SLICE
}

/// One experiment iteration, fully self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// 128-bit random identifier, 32 lowercase hex characters.
    pub run_id: String,
    pub episode_id: String,
    pub iteration: u64,
    pub timestamp_utc: DateTime<Utc>,
    pub benchmark: String,
    /// The workload block, verbatim from the experiment config.
    pub workload: serde_json::Value,
    pub assignment: BTreeMap<String, TunableValue>,
    pub objective: ObjectiveRecord,
    pub metrics: Vec<RecordedMetric>,
    pub counters: CounterDelta,
    pub optimizer: OptimizerRecord,
    pub schema_version: u32,
}

impl RunRecord {
    /// Component name for RPI matching.
    pub fn component_name(&self) -> &str {
        &self.benchmark
    }

    /// Workload name for RPI matching: the block's `name`, else the
    /// benchmark name.
    pub fn workload_name(&self) -> &str {
        self.workload
            .get("name")
            .and_then(|v| v.as_str())
            .unwrap_or(&self.benchmark)
    }

    pub fn metric_by_name(&self, name: &str) -> Option<&RecordedMetric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

/// Fresh 128-bit random run identifier.
pub fn new_run_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

/// Append-only store: one JSON object per line. Single writer per file;
/// readers tolerate a growing file.
pub struct RunStore {
    path: PathBuf,
    file: File,
}

impl RunStore {
    /// Open for appending, creating the file if needed.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RunStore {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Serialize `record` as exactly one line and flush it before
    /// returning.
    pub fn append(&mut self, record: &RunRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(record)?;
        debug_assert!(!line.contains('\n'));
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Anomalies noticed while loading a store.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Complete lines that failed to parse.
    pub invalid_lines: usize,
    /// Records rejected for an unknown schema_version.
    pub unknown_schema: usize,
    /// A partial final line (crash artifact) was ignored.
    pub truncated_tail: bool,
}

impl LoadReport {
    pub fn warning_count(&self) -> usize {
        self.invalid_lines + self.unknown_schema + usize::from(self.truncated_tail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunFilter {
    pub episode: Option<String>,
    pub benchmark: Option<String>,
}

impl RunFilter {
    fn matches(&self, record: &RunRecord) -> bool {
        self.episode
            .as_deref()
            .is_none_or(|e| record.episode_id == e)
            && self
                .benchmark
                .as_deref()
                .is_none_or(|b| record.benchmark == b)
    }
}

/// Load records in append order. Invalid complete lines and
/// unknown-schema records are skipped and counted; a partial trailing
/// line is ignored as crash residue.
pub fn load_runs(
    path: &Path,
    filter: &RunFilter,
) -> Result<(Vec<RunRecord>, LoadReport), StoreError> {
    let text = std::fs::read_to_string(path)?;
    let mut report = LoadReport::default();
    let mut records = Vec::new();

    let complete: &str = if text.is_empty() || text.ends_with('\n') {
        &text
    } else {
        // keep only the bytes up to the last newline
        match text.rfind('\n') {
            Some(pos) => {
                report.truncated_tail = true;
                &text[..=pos]
            }
            None => {
                report.truncated_tail = true;
                ""
            }
        }
    };

    for line in complete.lines() {
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(record) if record.schema_version == SCHEMA_VERSION => {
                if filter.matches(&record) {
                    records.push(record);
                }
            }
            Ok(_) => report.unknown_schema += 1,
            Err(_) => report.invalid_lines += 1,
        }
    }
    Ok((records, report))
}

/// Per-episode summary: the best run and the prefix-best convergence trace.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeReport {
    pub episode_id: String,
    pub benchmark: String,
    pub optimizer_kind: OptimizerKind,
    pub strategy: StrategyMode,
    pub runs: usize,
    pub best_iteration: u64,
    pub best_run_id: String,
    /// Best objective in the user's orientation.
    pub best_objective: f64,
    pub best_assignment: BTreeMap<String, TunableValue>,
    /// Best-so-far objective per iteration, user orientation (non-increasing
    /// for minimization, non-decreasing for maximization).
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub episodes: Vec<EpisodeReport>,
}

/// Summarize runs per episode: best by canonical objective (ties to the
/// earliest iteration) and the prefix-best trace.
pub fn report(runs: &[RunRecord]) -> Result<Report, StoreError> {
    if runs.is_empty() {
        return Err(StoreError::EmptyReport);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for run in runs {
        let entry = grouped.entry(&run.episode_id).or_default();
        if entry.is_empty() {
            order.push(&run.episode_id);
        }
        entry.push(run);
    }

    let mut episodes = Vec::new();
    for episode_id in order {
        let group = &grouped[episode_id];
        let direction = group[0].objective.direction;
        let mut best: Option<(&RunRecord, f64)> = None;
        let mut trace = Vec::with_capacity(group.len());
        for run in group {
            let canonical = run.objective.canonical_value();
            match best {
                Some((_, b)) if b <= canonical => {}
                _ => best = Some((run, canonical)),
            }
            trace.push(direction.user_facing(best.expect("just set").1));
        }
        let (best_run, _) = best.expect("group non-empty");
        episodes.push(EpisodeReport {
            episode_id: episode_id.to_string(),
            benchmark: best_run.benchmark.clone(),
            optimizer_kind: group[0].optimizer.kind,
            strategy: group[0].optimizer.strategy,
            runs: group.len(),
            best_iteration: best_run.iteration,
            best_run_id: best_run.run_id.clone(),
            best_objective: best_run.objective.value,
            best_assignment: best_run.assignment.clone(),
            trace,
        });
    }
    Ok(Report { episodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::aggregate;

    fn record(episode: &str, iteration: u64, objective: f64, direction: Direction) -> RunRecord {
        RunRecord {
            run_id: new_run_id(),
            episode_id: episode.to_string(),
            iteration,
            timestamp_utc: Utc::now(),
            benchmark: "synthetic".to_string(),
            workload: serde_json::json!({"surface": "quadratic1d"}),
            assignment: BTreeMap::from([(
                "x".to_string(),
                TunableValue::Real(objective / 10.0),
            )]),
            objective: ObjectiveRecord {
                metric: "objective".to_string(),
                direction,
                aggregate: AggregateField::Mean,
                value: objective,
            },
            metrics: vec![RecordedMetric::from_aggregate(
                &aggregate(1, &[objective]).unwrap(),
                "objective",
                "value",
            )],
            counters: CounterDelta {
                wall_ns: 1000,
                cpu_ns: Some(900),
                max_rss_bytes: Some(0),
                ctx_switches: Some(0),
            },
            optimizer: OptimizerRecord {
                kind: OptimizerKind::RandomSearch,
                seed: 1,
                strategy: StrategyMode::AllAtOnce,
                slice: 10,
            },
            schema_version: SCHEMA_VERSION,
        }
    }

    #[test]
    fn run_ids_are_32_hex() {
        let id = new_run_id();
        assert_eq!(id.len(), 32);
        assert!(id.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_ne!(new_run_id(), id);
    }

    #[test]
    fn append_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let r = record("e1", 0, 3.5, Direction::Minimize);
        {
            let mut store = RunStore::open(&path).unwrap();
            store.append(&r).unwrap();
        }
        let (loaded, report) = load_runs(&path, &RunFilter::default()).unwrap();
        assert_eq!(report.warning_count(), 0);
        assert_eq!(loaded, vec![r]);
    }

    #[test]
    fn truncated_final_line_is_ignored_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        {
            let mut store = RunStore::open(&path).unwrap();
            store.append(&record("e1", 0, 1.0, Direction::Minimize)).unwrap();
            store.append(&record("e1", 1, 2.0, Direction::Minimize)).unwrap();
        }
        // simulate a crash mid-append
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"run_id\":\"deadbeef");
        std::fs::write(&path, text).unwrap();

        let (loaded, report) = load_runs(&path, &RunFilter::default()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert!(report.truncated_tail);
        assert_eq!(report.warning_count(), 1);
    }

    #[test]
    fn appends_preserve_order_and_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let n = 10_000u64;
        {
            let mut store = RunStore::open(&path).unwrap();
            for i in 0..n {
                store
                    .append(&record("e1", i, i as f64, Direction::Minimize))
                    .unwrap();
            }
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), n as usize);
        let (loaded, _) = load_runs(&path, &RunFilter::default()).unwrap();
        assert_eq!(loaded.len(), n as usize);
        for (i, run) in loaded.iter().enumerate() {
            assert_eq!(run.iteration, i as u64);
        }
    }

    #[test]
    fn mixed_corpus_counts_warnings_per_invalid_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let good = serde_json::to_string(&record("e1", 0, 1.0, Direction::Minimize)).unwrap();
        let mut other = record("e1", 1, 2.0, Direction::Minimize);
        other.schema_version = 99;
        let unknown = serde_json::to_string(&other).unwrap();
        let corpus = format!("{good}\nnot json at all\n{unknown}\n{{\"half\": true}}\n{good}\n");
        std::fs::write(&path, corpus).unwrap();

        let (loaded, report) = load_runs(&path, &RunFilter::default()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(report.invalid_lines, 2);
        assert_eq!(report.unknown_schema, 1);
        assert_eq!(report.warning_count(), 3);
    }

    #[test]
    fn empty_file_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        std::fs::write(&path, "").unwrap();
        let (loaded, report) = load_runs(&path, &RunFilter::default()).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(report.warning_count(), 0);
    }

    #[test]
    fn filter_by_episode_returns_exactly_that_episode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        {
            let mut store = RunStore::open(&path).unwrap();
            for episode in ["a", "b", "a"] {
                store
                    .append(&record(episode, 0, 1.0, Direction::Minimize))
                    .unwrap();
            }
        }
        let (loaded, _) = load_runs(
            &path,
            &RunFilter {
                episode: Some("a".to_string()),
                benchmark: None,
            },
        )
        .unwrap();
        assert_eq!(loaded.len(), 2);
        assert!(loaded.iter().all(|r| r.episode_id == "a"));
    }

    #[test]
    fn report_best_and_trace() {
        let runs = vec![
            record("e1", 0, 3.0, Direction::Minimize),
            record("e1", 1, 1.0, Direction::Minimize),
            record("e1", 2, 2.0, Direction::Minimize),
        ];
        let rep = report(&runs).unwrap();
        assert_eq!(rep.episodes.len(), 1);
        let e = &rep.episodes[0];
        assert_eq!(e.best_iteration, 1);
        assert_eq!(e.trace, vec![3.0, 1.0, 1.0]);
    }

    #[test]
    fn report_single_run() {
        let runs = vec![record("e1", 0, 5.0, Direction::Minimize)];
        let rep = report(&runs).unwrap();
        assert_eq!(rep.episodes[0].trace, vec![5.0]);
        assert_eq!(rep.episodes[0].best_iteration, 0);
    }

    #[test]
    fn report_ties_break_to_earliest_iteration() {
        let runs = vec![
            record("e1", 0, 2.0, Direction::Minimize),
            record("e1", 1, 2.0, Direction::Minimize),
        ];
        let rep = report(&runs).unwrap();
        assert_eq!(rep.episodes[0].best_iteration, 0);
    }

    #[test]
    fn maximize_trace_is_non_decreasing_user_facing() {
        let runs = vec![
            record("e1", 0, 10.0, Direction::Maximize),
            record("e1", 1, 5.0, Direction::Maximize),
            record("e1", 2, 20.0, Direction::Maximize),
        ];
        let rep = report(&runs).unwrap();
        assert_eq!(rep.episodes[0].trace, vec![10.0, 10.0, 20.0]);
        assert_eq!(rep.episodes[0].best_objective, 20.0);
    }

    #[test]
    fn trace_matches_independent_fold() {
        let mut values = Vec::new();
        let mut runs = Vec::new();
        let mut state = 0x12345u64;
        for i in 0..200 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let v = (state >> 33) as f64 / 1e9;
            values.push(v);
            runs.push(record("e1", i, v, Direction::Minimize));
        }
        let rep = report(&runs).unwrap();
        // independent fold oracle
        let mut best = f64::INFINITY;
        let oracle: Vec<f64> = values
            .iter()
            .map(|&v| {
                best = best.min(v);
                best
            })
            .collect();
        assert_eq!(rep.episodes[0].trace, oracle);
    }

    #[test]
    fn report_on_empty_input_errors() {
        assert!(matches!(report(&[]), Err(StoreError::EmptyReport)));
    }

    #[test]
    fn count_rate_uses_wall_seconds() {
        let agg = aggregate(1, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let rate = AggregateField::CountRate.extract(&agg, 2_000_000_000);
        assert_eq!(rate, 2.0);
    }
}
