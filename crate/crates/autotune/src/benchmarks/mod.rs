//! Tunable, instrumented microbenchmarks and the workload-driving surface
//! the agent programs against.
//!
//! Each benchmark bundles a built-in [`ComponentSpec`] (its tunables and
//! metrics), accepts assignments through [`Workbench::apply`], and pours
//! metric events into a [`MetricCollector`] per run. Benchmarks own their
//! worker threads; the agent never reaches into them.

mod hashtable;
mod spinlock;
mod synthetic;

pub use hashtable::{
    hashtable_run, ChainedTable, HashFn, HashTableConfig, HashTableMetrics, HashTableWorkload,
    KeyDist, BUCKET_SLOT_BYTES, NODE_BYTES,
};
pub use spinlock::{
    spinlock_run, workload_family, ContentionWorkload, SpinlockConfig, SpinlockMetrics,
    HEAVY_OPS_SCALE, MAX_SPIN_LIMIT,
};
pub use synthetic::Surface;

use serde::Deserialize;
use thiserror::Error;

use crate::telemetry::MetricCollector;
use crate::tunables::{
    validate_assignment, AssignmentError, ComponentSpec, TunableAssignment, TunableDef,
};

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("unknown benchmark `{0}` (expected hashtable, spinlock, or synthetic)")]
    UnknownBenchmark(String),
    #[error("bad workload block: {0}")]
    Workload(String),
    #[error("invalid assignment: {}", format_violations(.0))]
    Assignment(Vec<AssignmentError>),
}

fn format_violations(errors: &[AssignmentError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Anything the agent can configure and drive: a declared search space, an
/// assignment sink, and a run that emits metric events.
pub trait Workbench: Send {
    fn spec(&self) -> &ComponentSpec;
    fn apply(&mut self, assignment: &TunableAssignment) -> Result<(), WorkbenchError>;
    fn run(&mut self, collector: &mut MetricCollector) -> Result<(), WorkbenchError>;
}

fn checked<'a>(
    spec: &ComponentSpec,
    assignment: &'a TunableAssignment,
) -> Result<&'a TunableAssignment, WorkbenchError> {
    validate_assignment(spec, assignment).map_err(WorkbenchError::Assignment)?;
    Ok(assignment)
}

// ---------------------------------------------------------------------------
// hashtable

/// Workload block for the hashtable benchmark, as it appears in experiment
/// configs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashTableWorkloadConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_n_keys")]
    pub n_keys: u64,
    #[serde(default = "default_key_dist")]
    pub key_dist: KeyDist,
    #[serde(default = "default_zipf_s")]
    pub zipf_s: f64,
    #[serde(default = "default_read_fraction")]
    pub read_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub resizing_enabled: bool,
}

fn default_n_keys() -> u64 {
    10_000
}
fn default_key_dist() -> KeyDist {
    KeyDist::Uniform
}
fn default_zipf_s() -> f64 {
    1.1
}
fn default_read_fraction() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

pub mod hashtable_metric_ids {
    pub const COLLISIONS: u32 = 1;
    pub const PROBE_LEN: u32 = 2;
    pub const OP_LATENCY_NS: u32 = 3;
    pub const RESIDENT_BYTES: u32 = 4;
}

pub fn hashtable_component_spec() -> ComponentSpec {
    ComponentSpec::new(1, "hashtable")
        .with_tunable(TunableDef::integer("bucket_count_log2", 1, 0, 24, 4))
        .with_tunable(TunableDef::real("max_load_factor", 2, 0.25, 8.0, 4.0))
        .with_tunable(TunableDef::integer("growth_log2", 3, 1, 3, 1))
        .with_tunable(TunableDef::categorical(
            "hash_fn",
            4,
            &["multiply_shift", "fnv1a"],
            "multiply_shift",
        ))
        .with_metric(hashtable_metric_ids::COLLISIONS, "collisions", "count")
        .with_metric(hashtable_metric_ids::PROBE_LEN, "probe_len", "links")
        .with_metric(hashtable_metric_ids::OP_LATENCY_NS, "op_latency_ns", "ns")
        .with_metric(
            hashtable_metric_ids::RESIDENT_BYTES,
            "resident_bytes",
            "bytes",
        )
}

pub struct HashTableBench {
    spec: ComponentSpec,
    config: HashTableConfig,
    workload: HashTableWorkload,
    seed: u64,
}

impl HashTableBench {
    pub fn new(workload: HashTableWorkloadConfig) -> Result<Self, WorkbenchError> {
        if !(0.0..=1.0).contains(&workload.read_fraction) {
            return Err(WorkbenchError::Workload(
                "read_fraction must lie in [0, 1]".into(),
            ));
        }
        if workload.key_dist == KeyDist::Zipf && workload.zipf_s <= 0.0 {
            return Err(WorkbenchError::Workload("zipf_s must be positive".into()));
        }
        if workload.n_keys == 0 {
            return Err(WorkbenchError::Workload("n_keys must be positive".into()));
        }
        Ok(HashTableBench {
            spec: hashtable_component_spec(),
            config: HashTableConfig {
                resizing_enabled: workload.resizing_enabled,
                ..HashTableConfig::default()
            },
            workload: HashTableWorkload {
                n_keys: workload.n_keys,
                key_dist: workload.key_dist,
                zipf_s: workload.zipf_s,
                read_fraction: workload.read_fraction,
            },
            seed: workload.seed,
        })
    }
}

impl Workbench for HashTableBench {
    fn spec(&self) -> &ComponentSpec {
        &self.spec
    }

    fn apply(&mut self, assignment: &TunableAssignment) -> Result<(), WorkbenchError> {
        let a = checked(&self.spec, assignment)?;
        self.config.bucket_count_log2 =
            a.get("bucket_count_log2").unwrap().as_i64().unwrap() as u32;
        self.config.max_load_factor = a.get("max_load_factor").unwrap().as_f64().unwrap();
        self.config.growth_log2 = a.get("growth_log2").unwrap().as_i64().unwrap() as u32;
        self.config.hash_fn = match a.get("hash_fn").unwrap().as_category().unwrap() {
            "fnv1a" => HashFn::Fnv1a,
            _ => HashFn::MultiplyShift,
        };
        Ok(())
    }

    fn run(&mut self, collector: &mut MetricCollector) -> Result<(), WorkbenchError> {
        let (metrics, _) = hashtable_run(&self.config, &self.workload, self.seed);
        collector.record(hashtable_metric_ids::COLLISIONS, metrics.collisions as f64);
        collector.record_many(hashtable_metric_ids::PROBE_LEN, metrics.probe_len);
        collector.record_many(hashtable_metric_ids::OP_LATENCY_NS, metrics.op_latency_ns);
        collector.record(
            hashtable_metric_ids::RESIDENT_BYTES,
            metrics.resident_bytes as f64,
        );
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// spinlock

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinlockWorkloadConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_family_k")]
    pub family_k: u32,
    #[serde(default)]
    pub n_light: Option<u32>,
    #[serde(default = "default_light_ops")]
    pub light_ops: u32,
    #[serde(default = "default_duration_ms")]
    pub duration_ms: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_family_k() -> u32 {
    1
}
fn default_light_ops() -> u32 {
    16
}
fn default_duration_ms() -> u64 {
    500
}

pub mod spinlock_metric_ids {
    pub const THROUGHPUT_OPS_S: u32 = 1;
    pub const ACQUISITIONS: u32 = 2;
    pub const CONTENDED_ACQUISITIONS: u32 = 3;
    pub const BACKOFF_EVENTS: u32 = 4;
    pub const ACQUIRE_NS: u32 = 5;
}

pub fn spinlock_component_spec() -> ComponentSpec {
    ComponentSpec::new(2, "spinlock")
        .with_tunable(TunableDef::integer(
            "max_spin",
            1,
            0,
            MAX_SPIN_LIMIT as i64,
            1024,
        ))
        .with_tunable(TunableDef::integer("backoff_initial_us", 2, 1, 1024, 8).log_scale())
        .with_tunable(TunableDef::integer("backoff_cap_us", 3, 1, 65536, 1024).log_scale())
        .with_metric(
            spinlock_metric_ids::THROUGHPUT_OPS_S,
            "throughput_ops_s",
            "ops/s",
        )
        .with_metric(spinlock_metric_ids::ACQUISITIONS, "acquisitions", "count")
        .with_metric(
            spinlock_metric_ids::CONTENDED_ACQUISITIONS,
            "contended_acquisitions",
            "count",
        )
        .with_metric(spinlock_metric_ids::BACKOFF_EVENTS, "backoff_events", "count")
        .with_metric(spinlock_metric_ids::ACQUIRE_NS, "acquire_ns", "ns")
}

pub struct SpinlockBench {
    spec: ComponentSpec,
    config: SpinlockConfig,
    workload: ContentionWorkload,
    seed: u64,
}

impl SpinlockBench {
    pub fn new(workload: SpinlockWorkloadConfig) -> Result<Self, WorkbenchError> {
        if !(1..=7).contains(&workload.family_k) {
            return Err(WorkbenchError::Workload("family_k must lie in 1..=7".into()));
        }
        let defaults = ContentionWorkload::default();
        Ok(SpinlockBench {
            spec: spinlock_component_spec(),
            config: SpinlockConfig::default(),
            workload: ContentionWorkload {
                k: workload.family_k,
                n_light: workload.n_light.unwrap_or(defaults.n_light),
                light_ops: workload.light_ops,
                heavy_ops: workload.family_k * HEAVY_OPS_SCALE,
                duration_ms: workload.duration_ms,
            },
            seed: workload.seed,
        })
    }
}

impl Workbench for SpinlockBench {
    fn spec(&self) -> &ComponentSpec {
        &self.spec
    }

    fn apply(&mut self, assignment: &TunableAssignment) -> Result<(), WorkbenchError> {
        let a = checked(&self.spec, assignment)?;
        self.config.max_spin = a.get("max_spin").unwrap().as_i64().unwrap() as u64;
        self.config.backoff_initial_us =
            a.get("backoff_initial_us").unwrap().as_i64().unwrap() as u64;
        let cap = a.get("backoff_cap_us").unwrap().as_i64().unwrap() as u64;
        // initial <= cap is a cross-parameter constraint the optimizer can't
        // see; lift the cap rather than reject the suggestion.
        self.config.backoff_cap_us = cap.max(self.config.backoff_initial_us);
        Ok(())
    }

    fn run(&mut self, collector: &mut MetricCollector) -> Result<(), WorkbenchError> {
        let (metrics, _) = spinlock_run(&self.config, &self.workload, self.seed);
        collector.record(
            spinlock_metric_ids::THROUGHPUT_OPS_S,
            metrics.throughput_ops_s,
        );
        collector.record(
            spinlock_metric_ids::ACQUISITIONS,
            metrics.acquisitions as f64,
        );
        collector.record(
            spinlock_metric_ids::CONTENDED_ACQUISITIONS,
            metrics.contended_acquisitions as f64,
        );
        collector.record(
            spinlock_metric_ids::BACKOFF_EVENTS,
            metrics.backoff_events as f64,
        );
        collector.record_many(spinlock_metric_ids::ACQUIRE_NS, metrics.acquire_ns);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// synthetic

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWorkloadConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub surface: Surface,
}

pub mod synthetic_metric_ids {
    pub const OBJECTIVE: u32 = 1;
}

pub struct SyntheticBench {
    spec: ComponentSpec,
    surface: Surface,
    current: TunableAssignment,
}

impl SyntheticBench {
    pub fn new(workload: SyntheticWorkloadConfig) -> Self {
        let spec = workload.surface.component_spec();
        let current = spec.default_assignment();
        SyntheticBench {
            spec,
            surface: workload.surface,
            current,
        }
    }
}

impl Workbench for SyntheticBench {
    fn spec(&self) -> &ComponentSpec {
        &self.spec
    }

    fn apply(&mut self, assignment: &TunableAssignment) -> Result<(), WorkbenchError> {
        self.current = checked(&self.spec, assignment)?.clone();
        Ok(())
    }

    fn run(&mut self, collector: &mut MetricCollector) -> Result<(), WorkbenchError> {
        collector.record(
            synthetic_metric_ids::OBJECTIVE,
            self.surface.eval_assignment(&self.current),
        );
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// registry

/// Construct a benchmark by name from its workload block.
pub fn build_workbench(
    benchmark: &str,
    workload: &serde_json::Value,
) -> Result<Box<dyn Workbench>, WorkbenchError> {
    match benchmark {
        "hashtable" => {
            let cfg: HashTableWorkloadConfig = serde_json::from_value(workload.clone())
                .map_err(|e| WorkbenchError::Workload(e.to_string()))?;
            Ok(Box::new(HashTableBench::new(cfg)?))
        }
        "spinlock" => {
            let cfg: SpinlockWorkloadConfig = serde_json::from_value(workload.clone())
                .map_err(|e| WorkbenchError::Workload(e.to_string()))?;
            Ok(Box::new(SpinlockBench::new(cfg)?))
        }
        "synthetic" => {
            let cfg: SyntheticWorkloadConfig = serde_json::from_value(workload.clone())
                .map_err(|e| WorkbenchError::Workload(e.to_string()))?;
            Ok(Box::new(SyntheticBench::new(cfg)))
        }
        other => Err(WorkbenchError::UnknownBenchmark(other.to_string())),
    }
}

/// Workload name used for RPI matching: the block's `name` field, falling
/// back to the benchmark name.
pub fn workload_name(benchmark: &str, workload: &serde_json::Value) -> String {
    workload
        .get("name")
        .and_then(|v| v.as_str())
        .unwrap_or(benchmark)
        .to_string()
}
