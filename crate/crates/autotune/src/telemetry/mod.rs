//! Metric event aggregation and OS resource counters.
//!
//! Components report metric events; the agent aggregates them into order
//! statistics per metric and samples process-level counters around each
//! run. Percentiles are exact nearest-rank over retained samples — run
//! sizes here are small enough that sketches would only add error.
//!
//! Concurrency: [`TelemetrySink::record_event`] takes `&mut self`, so all
//! events of a component funnel through a single emitting context (the
//! SPSC producer contract of the channel). Worker threads accumulate
//! locally and emit after joining, or hand events to the owning context.
//! Aggregation runs in the agent's single consumer context.

mod counters;

pub use counters::{
    counter_delta, sample_counters, CounterDelta, CounterProvider, CounterSnapshot,
    PortableCounters,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    encode_frame, MsgType, PushError, RingProducer, TelemetryPayload,
};
use crate::tunables::ComponentSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("metric_id {0} is not declared by the component")]
    UndeclaredMetric(u32),
    #[error("cannot aggregate an empty sample set")]
    EmptySamples,
}

/// Order statistics of one metric over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub metric_id: u32,
    pub count: u64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl MetricAggregate {
    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// Nearest-rank percentile: the sorted value at 1-based index
/// `ceil(p/100 * n)`.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Aggregate a non-empty sample multiset into order statistics.
pub fn aggregate(metric_id: u32, samples: &[f64]) -> Result<MetricAggregate, TelemetryError> {
    if samples.is_empty() {
        return Err(TelemetryError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("metric samples must be ordered"));
    Ok(MetricAggregate {
        metric_id,
        count: sorted.len() as u64,
        sum: sorted.iter().sum(),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        p50: nearest_rank(&sorted, 50.0),
        p95: nearest_rank(&sorted, 95.0),
        p99: nearest_rank(&sorted, 99.0),
    })
}

/// Sample accumulator for one run, keyed by metric id. Used by local
/// benchmarks directly and by the agent when draining telemetry frames.
#[derive(Debug, Default)]
pub struct MetricCollector {
    samples: BTreeMap<u32, Vec<f64>>,
}

impl MetricCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, metric_id: u32, value: f64) {
        self.samples.entry(metric_id).or_default().push(value);
    }

    pub fn record_many(&mut self, metric_id: u32, values: impl IntoIterator<Item = f64>) {
        self.samples.entry(metric_id).or_default().extend(values);
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self, metric_id: u32) -> Option<&[f64]> {
        self.samples.get(&metric_id).map(|v| v.as_slice())
    }

    pub fn total_events(&self) -> u64 {
        self.samples.values().map(|v| v.len() as u64).sum()
    }

    /// Move every sample of `other` into this collector.
    pub fn absorb(&mut self, other: MetricCollector) {
        for (metric_id, values) in other.samples {
            self.samples.entry(metric_id).or_default().extend(values);
        }
    }

    /// Aggregate every metric that saw at least one event, in metric-id
    /// order.
    pub fn finish(&self) -> Vec<MetricAggregate> {
        self.samples
            .iter()
            .map(|(&id, v)| aggregate(id, v).expect("non-empty by construction"))
            .collect()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

/// Component-side emitter: turns metric events into TELEMETRY frames on the
/// outbound ring. Never blocks the instrumented hot path — a full ring
/// drops the event and bumps a per-metric drop counter.
pub struct TelemetrySink {
    component_id: u32,
    declared: Vec<u32>,
    drops: BTreeMap<u32, u64>,
}

impl TelemetrySink {
    pub fn new(spec: &ComponentSpec) -> Self {
        TelemetrySink {
            component_id: spec.component_id,
            declared: spec.metrics.iter().map(|m| m.metric_id).collect(),
            drops: BTreeMap::new(),
        }
    }

    /// Enqueue one event as a TELEMETRY frame. Returns `Ok` whether the
    /// frame was published or dropped on backpressure; only an undeclared
    /// metric is an error.
    pub fn record_event(
        &mut self,
        tx: &mut RingProducer,
        metric_id: u32,
        value: f64,
        timestamp_ns: u64,
    ) -> Result<(), TelemetryError> {
        if !self.declared.contains(&metric_id) {
            return Err(TelemetryError::UndeclaredMetric(metric_id));
        }
        let payload = TelemetryPayload {
            component_id: self.component_id,
            metric_id,
            timestamp_ns,
            value,
        }
        .encode();
        let frame = encode_frame(MsgType::Telemetry, &payload).expect("24-byte payload fits");
        match tx.push(&frame) {
            Ok(()) => {}
            Err(PushError::Full) => {
                *self.drops.entry(metric_id).or_insert(0) += 1;
            }
            Err(PushError::Oversize(_)) => unreachable!("telemetry frames are 40 bytes"),
        }
        Ok(())
    }

    /// Events dropped on backpressure for one metric.
    pub fn drops(&self, metric_id: u32) -> u64 {
        self.drops.get(&metric_id).copied().unwrap_or(0)
    }

    pub fn total_drops(&self) -> u64 {
        self.drops.values().sum()
    }
}
