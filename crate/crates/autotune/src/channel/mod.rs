//! Framed messages over SPSC ring buffers — the low-latency channel between
//! an instrumented component and its side agent.
//!
//! Two rings make a connection: component→agent carries REGISTER, TELEMETRY
//! and ACK frames; agent→component carries CONFIG_UPDATE and the
//! registration ACK. Each ring is strictly single-producer/single-consumer.
//! A frame's *sequence number* is its position counter on the ring it was
//! pushed to; ACK payloads carry that counter.
//!
//! Flow control is the caller's business: telemetry producers drop on a
//! full ring (and count the drop), config producers retry with bounded
//! backoff.

mod frame;
mod ring;
mod shm;

pub use frame::{
    crc32, decode_ack_payload, decode_frame, encode_ack_payload, encode_frame, ConfigUpdatePayload,
    ConfigValue, FrameError, MsgType, TelemetryPayload, CONFIG_UPDATE_PAYLOAD_LEN, FRAME_MAGIC,
    FRAME_OVERHEAD, FRAME_VERSION, MAX_PAYLOAD_LEN, TELEMETRY_PAYLOAD_LEN,
};
pub use ring::{
    heap_ring, ring_region_len, Backing, HeapBacking, PushError, RingConsumer, RingError,
    RingProducer, RING_HEADER_LEN, RING_MAGIC, RING_VERSION, SLOT_SIZE,
};
pub use shm::{in_process_channel, AgentChannel, ComponentChannel, TransportError};

#[cfg(unix)]
pub use shm::Transport;
