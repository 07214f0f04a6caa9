//! Process-level resource counters sampled around runs.
//!
//! The default provider reports portable stand-ins for hardware event
//! counters: wall time, process CPU time (user+system), peak RSS, and
//! context switches. Fields a platform cannot supply stay absent — they are
//! never zero-filled. Hardware-event providers can plug in behind
//! [`CounterProvider`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Point-in-time reading of the process counters. `wall_ns` and `cpu_ns`
/// are monotone between snapshots; `max_rss_bytes` is the process high-water
/// mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub wall_ns: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpu_ns: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rss_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ctx_switches: Option<u64>,
}

/// Componentwise `after - before`. All fields are clamped at zero; a field
/// absent on either side is absent in the delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CounterDelta {
    pub wall_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_ns: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rss_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ctx_switches: Option<u64>,
}

pub trait CounterProvider {
    fn sample(&self) -> CounterSnapshot;
}

/// Default portable provider: monotonic clock, `CLOCK_PROCESS_CPUTIME_ID`,
/// and `getrusage` on unix.
#[derive(Debug, Clone, Copy, Default)]
pub struct PortableCounters;

fn wall_anchor() -> Instant {
    use std::sync::OnceLock;
    static ANCHOR: OnceLock<Instant> = OnceLock::new();
    *ANCHOR.get_or_init(Instant::now)
}

#[cfg(unix)]
fn cpu_time_ns() -> Option<u64> {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: plain out-parameter syscall wrapper.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return None;
    }
    Some(ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64)
}

#[cfg(unix)]
fn rusage() -> Option<(u64, u64)> {
    // SAFETY: plain out-parameter syscall wrapper.
    let usage = unsafe {
        let mut usage: libc::rusage = std::mem::zeroed();
        if libc::getrusage(libc::RUSAGE_SELF, &mut usage) != 0 {
            return None;
        }
        usage
    };
    // ru_maxrss is kilobytes on Linux, bytes on the BSDs.
    let rss_scale = if cfg!(target_os = "linux") { 1024 } else { 1 };
    let max_rss_bytes = usage.ru_maxrss as u64 * rss_scale;
    let ctx = usage.ru_nvcsw as u64 + usage.ru_nivcsw as u64;
    Some((max_rss_bytes, ctx))
}

impl CounterProvider for PortableCounters {
    fn sample(&self) -> CounterSnapshot {
        let wall_ns = wall_anchor().elapsed().as_nanos() as u64;
        #[cfg(unix)]
        {
            let (max_rss_bytes, ctx_switches) = match rusage() {
                Some((rss, ctx)) => (Some(rss), Some(ctx)),
                None => (None, None),
            };
            CounterSnapshot {
                wall_ns,
                cpu_ns: cpu_time_ns(),
                max_rss_bytes,
                ctx_switches,
            }
        }
        #[cfg(not(unix))]
        {
            CounterSnapshot {
                wall_ns,
                cpu_ns: None,
                max_rss_bytes: None,
                ctx_switches: None,
            }
        }
    }
}

/// Sample the default provider.
pub fn sample_counters() -> CounterSnapshot {
    PortableCounters.sample()
}

fn delta_opt(before: Option<u64>, after: Option<u64>) -> Option<u64> {
    Some(after?.saturating_sub(before?))
}

/// Componentwise difference of two snapshots of the same provider.
pub fn counter_delta(before: &CounterSnapshot, after: &CounterSnapshot) -> CounterDelta {
    CounterDelta {
        wall_ns: after.wall_ns.saturating_sub(before.wall_ns),
        cpu_ns: delta_opt(before.cpu_ns, after.cpu_ns),
        max_rss_bytes: delta_opt(before.max_rss_bytes, after.max_rss_bytes),
        ctx_switches: delta_opt(before.ctx_switches, after.ctx_switches),
    }
}
