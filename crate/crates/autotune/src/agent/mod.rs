//! The side agent: handshakes with components, hosts the optimizer, drives
//! workload runs, enacts configurations, and persists every iteration.
//!
//! An episode is strictly sequential: suggest, enact, snapshot counters,
//! run, snapshot again, aggregate, persist, feed the observation back. A
//! failure in any step aborts the episode after the completed iterations
//! have been persisted, so the store always holds a prefix of a complete
//! episode. One agent context serves one component; separate components run
//! as independent episodes.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::benchmarks::{Workbench, WorkbenchError};
use crate::channel::{
    decode_ack_payload, decode_frame, encode_ack_payload, encode_frame, AgentChannel,
    ConfigUpdatePayload, FrameError, MsgType, PushError, TelemetryPayload,
};
use crate::component::to_config_value;
use crate::experiment::{
    new_run_id, AggregateField, Direction, ObjectiveRecord, OptimizerRecord, RecordedMetric,
    RunRecord, RunStore, StoreError, SCHEMA_VERSION,
};
use crate::optimizer::{GpError, Observation, OptimizerKind, Strategy, StrategyMode, Tuner};
use crate::telemetry::{counter_delta, sample_counters, MetricCollector};
use crate::tunables::{
    decode_unit, encode_unit, AssignmentError, ComponentSpec, DecodeError, SpecError,
    TunableAssignment,
};

/// Config pushes retry this many times, 1 ms apart, before giving up.
pub const ENACT_RETRIES: u32 = 100;
pub const ENACT_BACKOFF: Duration = Duration::from_millis(1);
/// Default wait for REGISTER and for per-parameter ACKs.
pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);

const POLL_INTERVAL: Duration = Duration::from_micros(100);

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("handshake: {0}")]
    Handshake(String),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("config channel still full after {ENACT_RETRIES} retries")]
    ChannelFull,
    #[error("no ack for param_id {0} before timeout")]
    MissingAck(u32),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("invalid assignment: {0:?}")]
    Assignment(Vec<AssignmentError>),
    #[error(transparent)]
    Workbench(#[from] WorkbenchError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("objective metric `{0}` is not declared by the component")]
    ObjectiveMetricUnknown(String),
    #[error("objective value is not finite (iteration {0})")]
    NonFiniteObjective(u64),
}

/// What to optimize: a declared metric, a direction, and which aggregate
/// field of that metric is the objective value.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Objective {
    pub metric: String,
    pub direction: Direction,
    pub aggregate: AggregateField,
}

/// One tuning episode against one component.
#[derive(Debug, Clone)]
pub struct Episode {
    pub episode_id: String,
    /// Component/benchmark name recorded with every run.
    pub benchmark: String,
    /// Workload block, recorded verbatim.
    pub workload: serde_json::Value,
    pub objective: Objective,
    pub budget: usize,
    pub optimizer: OptimizerRecord,
    /// Overrides the component's built-in search space for suggestion and
    /// decoding (e.g. to narrow ranges). Tunable names and kinds must stay
    /// compatible with what the component applies.
    pub space: Option<ComponentSpec>,
}

/// Everything one iteration produced.
#[derive(Debug, Clone)]
pub struct IterationResult {
    pub iteration: u64,
    pub run_id: String,
    pub assignment: TunableAssignment,
    /// Objective in the user's orientation.
    pub objective_value: f64,
    /// Negated-if-maximize view fed to the optimizer.
    pub canonical_objective: f64,
    pub metrics: Vec<RecordedMetric>,
    pub counters: crate::telemetry::CounterDelta,
}

/// Wait for a REGISTER frame, validate the spec document, and ACK it with
/// the frame's ring sequence number. Invalid documents get no ACK.
pub fn handshake(
    channel: &mut AgentChannel,
    timeout: Duration,
) -> Result<ComponentSpec, AgentError> {
    let deadline = Instant::now() + timeout;
    loop {
        let seq = channel.rx.tail();
        match channel.rx.pop() {
            Some(bytes) => {
                let (msg_type, payload) = decode_frame(&bytes)?;
                if msg_type != MsgType::Register {
                    continue; // stray traffic before registration
                }
                let document = String::from_utf8(payload)
                    .map_err(|e| AgentError::Handshake(format!("register payload: {e}")))?;
                let spec = ComponentSpec::from_json(&document)
                    .map_err(|e| AgentError::Handshake(format!("malformed spec: {e}")))?;
                spec.validate()?;
                let ack = encode_frame(MsgType::Ack, &encode_ack_payload(seq))
                    .expect("8-byte payload fits");
                push_with_retry(channel, &ack)?;
                return Ok(spec);
            }
            None => {
                if Instant::now() > deadline {
                    return Err(AgentError::Timeout("REGISTER"));
                }
                std::thread::sleep(POLL_INTERVAL);
            }
        }
    }
}

fn push_with_retry(channel: &mut AgentChannel, frame: &[u8]) -> Result<(), AgentError> {
    for _ in 0..ENACT_RETRIES {
        match channel.tx.push(frame) {
            Ok(()) => return Ok(()),
            Err(PushError::Full) => std::thread::sleep(ENACT_BACKOFF),
            Err(PushError::Oversize(len)) => {
                return Err(AgentError::Frame(FrameError::Oversize { len }))
            }
        }
    }
    Err(AgentError::ChannelFull)
}

/// Send one CONFIG_UPDATE per parameter in declaration order, waiting for
/// the component's ACK after each before sending the next. Telemetry
/// arriving meanwhile is folded into `collector`.
pub fn enact(
    channel: &mut AgentChannel,
    spec: &ComponentSpec,
    assignment: &TunableAssignment,
    collector: &mut MetricCollector,
    ack_timeout: Duration,
) -> Result<(), AgentError> {
    crate::tunables::validate_assignment(spec, assignment).map_err(AgentError::Assignment)?;
    for def in &spec.tunables {
        let value = to_config_value(def, &assignment.values[&def.name])
            .expect("validated assignment converts");
        let payload = ConfigUpdatePayload {
            component_id: spec.component_id,
            param_id: def.param_id,
            value,
        }
        .encode();
        let frame = encode_frame(MsgType::ConfigUpdate, &payload).expect("24-byte payload fits");
        let seq = channel.tx.head();
        push_with_retry(channel, &frame)?;

        // ACK barrier: the component confirms this parameter before the
        // next is sent, so runs never start on a half-applied configuration.
        let deadline = Instant::now() + ack_timeout;
        loop {
            match channel.rx.pop() {
                Some(bytes) => match decode_frame(&bytes)? {
                    (MsgType::Ack, payload) => {
                        if decode_ack_payload(&payload)? == seq {
                            break;
                        }
                    }
                    (MsgType::Telemetry, payload) => {
                        let event = TelemetryPayload::decode(&payload)?;
                        collector.record(event.metric_id, event.value);
                    }
                    _ => {}
                },
                None => {
                    if Instant::now() > deadline {
                        return Err(AgentError::MissingAck(def.param_id));
                    }
                    std::thread::sleep(POLL_INTERVAL);
                }
            }
        }
    }
    Ok(())
}

/// Drain telemetry frames into `collector` for a wall-clock window.
/// Returns the number of events received.
pub fn collect_window(
    channel: &mut AgentChannel,
    collector: &mut MetricCollector,
    window: Duration,
) -> Result<u64, AgentError> {
    let deadline = Instant::now() + window;
    let mut received = 0;
    loop {
        match channel.rx.pop() {
            Some(bytes) => {
                if let (MsgType::Telemetry, payload) = decode_frame(&bytes)? {
                    let event = TelemetryPayload::decode(&payload)?;
                    collector.record(event.metric_id, event.value);
                    received += 1;
                }
            }
            None => {
                if Instant::now() > deadline {
                    return Ok(received);
                }
                std::thread::sleep(POLL_INTERVAL);
            }
        }
    }
}

/// Agent-side view of a remote component: enacts over the channel and
/// "runs" by collecting a telemetry window. Lets a channel-attached
/// component stand wherever a local benchmark would.
pub struct RemoteComponent {
    spec: ComponentSpec,
    channel: AgentChannel,
    window: Duration,
    ack_timeout: Duration,
    carry: MetricCollector,
}

impl RemoteComponent {
    /// Handshake and wrap the channel.
    pub fn connect(
        mut channel: AgentChannel,
        handshake_timeout: Duration,
        window: Duration,
    ) -> Result<Self, AgentError> {
        let spec = handshake(&mut channel, handshake_timeout)?;
        Ok(RemoteComponent {
            spec,
            channel,
            window,
            ack_timeout: DEFAULT_HANDSHAKE_TIMEOUT,
            carry: MetricCollector::new(),
        })
    }
}

impl Workbench for RemoteComponent {
    fn spec(&self) -> &ComponentSpec {
        &self.spec
    }

    fn apply(&mut self, assignment: &TunableAssignment) -> Result<(), WorkbenchError> {
        let mut carry = std::mem::take(&mut self.carry);
        enact(
            &mut self.channel,
            &self.spec,
            assignment,
            &mut carry,
            self.ack_timeout,
        )
        .map_err(|e| WorkbenchError::Workload(e.to_string()))?;
        self.carry = carry;
        Ok(())
    }

    fn run(&mut self, collector: &mut MetricCollector) -> Result<(), WorkbenchError> {
        collector.absorb(std::mem::take(&mut self.carry));
        collect_window(&mut self.channel, collector, self.window)
            .map_err(|e| WorkbenchError::Workload(e.to_string()))?;
        Ok(())
    }
}

fn objective_from_collector(
    spec: &ComponentSpec,
    objective: &Objective,
    metrics: &[RecordedMetric],
    wall_ns: u64,
    iteration: u64,
) -> Result<(f64, f64), AgentError> {
    let metric_def = spec
        .metric_by_name(&objective.metric)
        .ok_or_else(|| AgentError::ObjectiveMetricUnknown(objective.metric.clone()))?;
    let recorded = metrics
        .iter()
        .find(|m| m.metric_id == metric_def.metric_id)
        .ok_or_else(|| AgentError::ObjectiveMetricUnknown(objective.metric.clone()))?;
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
    let value = objective.aggregate.extract(&aggregate, wall_ns);
    if !value.is_finite() {
        return Err(AgentError::NonFiniteObjective(iteration));
    }
    Ok((value, objective.direction.canonical(value)))
}

/// Drive one full episode: per iteration, suggest, decode, enact, snapshot
/// counters, run, snapshot again, aggregate, persist, observe. The
/// suggestion sequence is a pure function of `(seed, prior observations)`,
/// so replaying the store reproduces it.
pub fn run_episode(
    episode: &Episode,
    workbench: &mut dyn Workbench,
    store: &mut RunStore,
) -> Result<Vec<IterationResult>, AgentError> {
    // Search space for suggestion/decoding; metrics always come from the
    // component itself.
    let space = episode
        .space
        .clone()
        .unwrap_or_else(|| workbench.spec().clone());
    space.validate()?;
    let spec = workbench.spec().clone();
    if spec.metric_by_name(&episode.objective.metric).is_none() {
        return Err(AgentError::ObjectiveMetricUnknown(
            episode.objective.metric.clone(),
        ));
    }
    let default_unit = encode_unit(&space, &space.default_assignment())
        .expect("validated space defaults encode");
    let strategy = Strategy::new(episode.optimizer.strategy, episode.optimizer.slice);
    let mut tuner = Tuner::new(
        episode.optimizer.kind,
        strategy,
        space.dimension(),
        default_unit,
        episode.optimizer.seed,
    );

    let mut observations: Vec<Observation> = Vec::with_capacity(episode.budget);
    let mut results = Vec::with_capacity(episode.budget);

    for iteration in 0..episode.budget as u64 {
        let point = tuner.suggest(&observations)?;
        let assignment = decode_unit(&space, &point)?;
        workbench.apply(&assignment)?;

        let before = sample_counters();
        let mut collector = MetricCollector::new();
        workbench.run(&mut collector)?;
        let after = sample_counters();
        let counters = counter_delta(&before, &after);

        let metrics: Vec<RecordedMetric> = collector
            .finish()
            .iter()
            .filter_map(|aggregate| {
                spec.metric_by_id(aggregate.metric_id)
                    .map(|def| RecordedMetric::from_aggregate(aggregate, &def.name, &def.unit))
            })
            .collect();
        let (value, canonical) = objective_from_collector(
            &spec,
            &episode.objective,
            &metrics,
            counters.wall_ns,
            iteration,
        )?;

        let record = RunRecord {
            run_id: new_run_id(),
            episode_id: episode.episode_id.clone(),
            iteration,
            timestamp_utc: chrono::Utc::now(),
            benchmark: episode.benchmark.clone(),
            workload: episode.workload.clone(),
            assignment: assignment.values.clone(),
            objective: ObjectiveRecord {
                metric: episode.objective.metric.clone(),
                direction: episode.objective.direction,
                aggregate: episode.objective.aggregate,
                value,
            },
            metrics: metrics.clone(),
            counters,
            optimizer: episode.optimizer.clone(),
            schema_version: SCHEMA_VERSION,
        };
        store.append(&record)?;

        observations.push(Observation {
            point,
            value: canonical,
        });
        results.push(IterationResult {
            iteration,
            run_id: record.run_id,
            assignment,
            objective_value: value,
            canonical_objective: canonical,
            metrics,
            counters,
        });
    }
    Ok(results)
}

/// Convenience: an all-at-once episode descriptor.
pub fn episode(
    episode_id: &str,
    benchmark: &str,
    workload: serde_json::Value,
    objective: Objective,
    budget: usize,
    kind: OptimizerKind,
    seed: u64,
) -> Episode {
    Episode {
        episode_id: episode_id.to_string(),
        benchmark: benchmark.to_string(),
        workload,
        objective,
        budget,
        optimizer: OptimizerRecord {
            kind,
            seed,
            strategy: StrategyMode::AllAtOnce,
            slice: crate::optimizer::DEFAULT_SLICE,
        },
        space: None,
    }
}
