//! Component-side runtime: registration, torn-free parameter application,
//! config processing, and telemetry emission.
//!
//! A component owns exactly one [`ComponentChannel`] (the producer of the
//! telemetry ring and the consumer of the config ring) and drives both from
//! a single context: [`Component::process_config`] and
//! [`Component::record_event`] take `&mut self`. Parameter values live in a
//! [`ParamTable`] of per-parameter atomics, so instrumented hot paths can
//! read them without ever observing a torn value; nothing is promised
//! across parameters.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::channel::{
    decode_ack_payload, decode_frame, encode_ack_payload, encode_frame, ComponentChannel,
    ConfigUpdatePayload, ConfigValue, FrameError, MsgType, PushError,
};
use crate::telemetry::{TelemetryError, TelemetrySink};
use crate::tunables::{ComponentSpec, SpecError, TunableDef, TunableKind, TunableValue};

#[derive(Debug, Error)]
pub enum ComponentError {
    #[error("spec document of {0} bytes exceeds the REGISTER frame budget")]
    SpecTooLarge(usize),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("serialize spec: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("channel full after bounded retry")]
    ChannelFull,
    #[error("config update for undeclared param_id {0}")]
    UnknownParam(u32),
    #[error("config update value does not fit tunable `{0}`")]
    ValueKind(String),
}

/// Map a concrete tunable value onto the wire representation.
pub fn to_config_value(def: &TunableDef, value: &TunableValue) -> Option<ConfigValue> {
    match (def.kind, value) {
        (TunableKind::Integer, TunableValue::Int(v)) => Some(ConfigValue::Int(*v)),
        (TunableKind::Real, TunableValue::Real(v)) => Some(ConfigValue::Real(*v)),
        (TunableKind::Real, TunableValue::Int(v)) => Some(ConfigValue::Real(*v as f64)),
        (TunableKind::Boolean, TunableValue::Bool(v)) => Some(ConfigValue::Bool(*v)),
        (TunableKind::Categorical, TunableValue::Category(c)) => def
            .categories
            .iter()
            .position(|k| k == c)
            .map(|i| ConfigValue::CategoryIndex(i as u32)),
        _ => None,
    }
}

/// Map a wire value back onto a concrete tunable value.
pub fn from_config_value(def: &TunableDef, value: ConfigValue) -> Option<TunableValue> {
    match (def.kind, value) {
        (TunableKind::Integer, ConfigValue::Int(v)) => Some(TunableValue::Int(v)),
        (TunableKind::Real, ConfigValue::Real(v)) => Some(TunableValue::Real(v)),
        (TunableKind::Boolean, ConfigValue::Bool(v)) => Some(TunableValue::Bool(v)),
        (TunableKind::Categorical, ConfigValue::CategoryIndex(i)) => def
            .categories
            .get(i as usize)
            .map(|c| TunableValue::Category(c.clone())),
        _ => None,
    }
}

fn value_bits(value: ConfigValue) -> u64 {
    match value {
        ConfigValue::Int(v) => v as u64,
        ConfigValue::Real(v) => v.to_bits(),
        ConfigValue::Bool(v) => v as u64,
        ConfigValue::CategoryIndex(i) => i as u64,
    }
}

/// Per-parameter atomic value storage. Readers on hot paths load single
/// parameters torn-free; cross-parameter consistency comes from the agent's
/// enact barrier, not from this table.
pub struct ParamTable {
    entries: Vec<(u32, TunableKind, AtomicU64)>,
}

impl ParamTable {
    pub fn from_spec(spec: &ComponentSpec) -> Self {
        let entries = spec
            .tunables
            .iter()
            .map(|def| {
                let initial = to_config_value(def, &def.default)
                    .expect("validated spec defaults convert");
                (def.param_id, def.kind, AtomicU64::new(value_bits(initial)))
            })
            .collect();
        ParamTable { entries }
    }

    fn entry(&self, param_id: u32) -> Option<&(u32, TunableKind, AtomicU64)> {
        self.entries.iter().find(|(id, _, _)| *id == param_id)
    }

    pub fn store(&self, param_id: u32, value: ConfigValue) -> bool {
        match self.entry(param_id) {
            Some((_, _, cell)) => {
                cell.store(value_bits(value), Ordering::Relaxed);
                true
            }
            None => false,
        }
    }

    pub fn load_int(&self, param_id: u32) -> Option<i64> {
        let (_, kind, cell) = self.entry(param_id)?;
        (*kind == TunableKind::Integer).then(|| cell.load(Ordering::Relaxed) as i64)
    }

    pub fn load_real(&self, param_id: u32) -> Option<f64> {
        let (_, kind, cell) = self.entry(param_id)?;
        (*kind == TunableKind::Real).then(|| f64::from_bits(cell.load(Ordering::Relaxed)))
    }

    pub fn load_bool(&self, param_id: u32) -> Option<bool> {
        let (_, kind, cell) = self.entry(param_id)?;
        (*kind == TunableKind::Boolean).then(|| cell.load(Ordering::Relaxed) != 0)
    }

    pub fn load_category_index(&self, param_id: u32) -> Option<u32> {
        let (_, kind, cell) = self.entry(param_id)?;
        (*kind == TunableKind::Categorical).then(|| cell.load(Ordering::Relaxed) as u32)
    }
}

const POLL_INTERVAL: Duration = Duration::from_micros(100);
const PUSH_RETRIES: u32 = 100;
const PUSH_BACKOFF: Duration = Duration::from_millis(1);

fn push_with_retry(
    tx: &mut crate::channel::RingProducer,
    frame: &[u8],
) -> Result<(), ComponentError> {
    for _ in 0..PUSH_RETRIES {
        match tx.push(frame) {
            Ok(()) => return Ok(()),
            Err(PushError::Full) => std::thread::sleep(PUSH_BACKOFF),
            Err(PushError::Oversize(len)) => return Err(ComponentError::SpecTooLarge(len)),
        }
    }
    Err(ComponentError::ChannelFull)
}

/// A registered component endpoint.
pub struct Component {
    spec: ComponentSpec,
    channel: ComponentChannel,
    sink: TelemetrySink,
    params: ParamTable,
}

impl Component {
    /// Validate the spec, send REGISTER (payload: the spec JSON document),
    /// and wait for the agent's ACK carrying the REGISTER frame's sequence
    /// number.
    pub fn register(
        mut channel: ComponentChannel,
        spec: ComponentSpec,
        timeout: Duration,
    ) -> Result<Self, ComponentError> {
        spec.validate()?;
        let document = spec.to_json()?;
        let frame = match encode_frame(MsgType::Register, document.as_bytes()) {
            Ok(f) => f,
            Err(FrameError::Oversize { len }) => return Err(ComponentError::SpecTooLarge(len)),
            Err(e) => return Err(e.into()),
        };
        let seq = channel.tx.head();
        push_with_retry(&mut channel.tx, &frame)?;

        let deadline = Instant::now() + timeout;
        loop {
            if let Some(bytes) = channel.rx.pop() {
                let (msg_type, payload) = decode_frame(&bytes)?;
                if msg_type == MsgType::Ack && decode_ack_payload(&payload)? == seq {
                    break;
                }
            } else if Instant::now() > deadline {
                return Err(ComponentError::Timeout("registration ack"));
            } else {
                std::thread::sleep(POLL_INTERVAL);
            }
        }
        let sink = TelemetrySink::new(&spec);
        let params = ParamTable::from_spec(&spec);
        Ok(Component {
            spec,
            channel,
            sink,
            params,
        })
    }

    pub fn spec(&self) -> &ComponentSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamTable {
        &self.params
    }

    /// Emit one metric event; drops (and counts) on backpressure.
    pub fn record_event(
        &mut self,
        metric_id: u32,
        value: f64,
        timestamp_ns: u64,
    ) -> Result<(), TelemetryError> {
        self.sink
            .record_event(&mut self.channel.tx, metric_id, value, timestamp_ns)
    }

    pub fn dropped_events(&self) -> u64 {
        self.sink.total_drops()
    }

    /// Drain pending CONFIG_UPDATE frames: store each value in the param
    /// table, hand it to `on_update`, and ACK it with its ring sequence
    /// number. Returns how many updates were applied.
    pub fn process_config(
        &mut self,
        mut on_update: impl FnMut(&str, &TunableValue),
    ) -> Result<usize, ComponentError> {
        let mut applied = 0;
        loop {
            let seq = self.channel.rx.tail();
            let Some(bytes) = self.channel.rx.pop() else {
                return Ok(applied);
            };
            let (msg_type, payload) = decode_frame(&bytes)?;
            if msg_type != MsgType::ConfigUpdate {
                continue;
            }
            let update = ConfigUpdatePayload::decode(&payload)?;
            let def = self
                .spec
                .tunables
                .iter()
                .find(|t| t.param_id == update.param_id)
                .ok_or(ComponentError::UnknownParam(update.param_id))?;
            let value = from_config_value(def, update.value)
                .ok_or_else(|| ComponentError::ValueKind(def.name.clone()))?;
            self.params.store(update.param_id, update.value);
            on_update(&def.name, &value);
            let ack = encode_frame(MsgType::Ack, &encode_ack_payload(seq))
                .expect("8-byte payload fits");
            push_with_retry(&mut self.channel.tx, &ack)?;
            applied += 1;
        }
    }

    /// Block until at least one config update arrives (or timeout), then
    /// drain. Convenience for loopback components.
    pub fn wait_config(
        &mut self,
        timeout: Duration,
        on_update: impl FnMut(&str, &TunableValue),
    ) -> Result<usize, ComponentError> {
        let deadline = Instant::now() + timeout;
        while self.channel.rx.is_empty() {
            if Instant::now() > deadline {
                return Err(ComponentError::Timeout("config update"));
            }
            std::thread::sleep(POLL_INTERVAL);
        }
        self.process_config(on_update)
    }
}
