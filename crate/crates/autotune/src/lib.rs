//! Desk-scale black-box auto-tuning for instrumented components.
//!
//! The pieces fit together like this: a component declares its tunable
//! parameters and metrics ([`tunables`]), talks to a side agent over a framed
//! SPSC shared-memory channel ([`channel`]), and reports metric events plus
//! OS counters ([`telemetry`]). The agent ([`agent`]) hosts black-box
//! optimizers ([`optimizer`]) that suggest configurations, enacts them, drives
//! workload runs ([`benchmarks`]), and appends every run to an experiment
//! store ([`experiment`]). Resource/performance envelopes ([`rpi`]) gate
//! configurations for regression testing.
//!
//! Start with the runnable examples (`cargo run --example <name>`):
//!
//! - `declare_space` — declaring tunables and mapping assignments to the
//!   unit hypercube
//! - `channel_frames` — the wire format and the ring buffer
//! - `random_search` / `bayesian_optimization` — optimizer episodes on
//!   synthetic surfaces
//! - `one_at_a_time` — coordinate-wise vs. joint tuning strategies
//! - `tune_hashtable` / `tune_spinlock` — the bundled microbenchmarks
//! - `rpi_gate` — learning and checking resource envelopes
//! - `agent_loopback` — agent and component over a memory-mapped transport
//!
//! The `autotune` binary wraps the same library surface behind `run`,
//! `optimize`, `report`, `rpi`, and `agent` subcommands.

pub mod agent;
pub mod benchmarks;
pub mod channel;
pub mod component;
pub mod config;
pub mod experiment;
pub mod optimizer;
pub mod rpi;
pub mod telemetry;
pub mod tunables;

pub mod cli;
