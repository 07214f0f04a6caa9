//! Test-and-set spinlock with a tunable spin budget and exponential
//! backoff, driven by a contention workload family: several light workers
//! plus one increasingly heavy worker (`heavy_ops = k * 256` for family
//! member `k`).
//!
//! Critical-section "work" is iterations of a linear congruential step fed
//! through `black_box`, so the optimizer cannot elide it. A protected
//! counter incremented non-atomically under the lock doubles as the mutual
//! exclusion oracle: it must equal total acquisitions.

use std::cell::UnsafeCell;
use std::hint::black_box;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::telemetry::{counter_delta, sample_counters, CounterDelta};

pub const MAX_SPIN_LIMIT: u64 = 1 << 20;
/// Heavy worker operations per critical section, per family index.
pub const HEAVY_OPS_SCALE: u32 = 256;
/// Acquire latency is sampled on every 8th acquisition per worker.
const LATENCY_SAMPLE_MASK: u64 = 0x7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpinlockConfig {
    /// Polling iterations before the first backoff. [0, 2^20].
    pub max_spin: u64,
    /// First backoff sleep, microseconds. [1, 1024].
    pub backoff_initial_us: u64,
    /// Backoff sleeps double up to this cap, microseconds. [1, 65536],
    /// `initial <= cap`.
    pub backoff_cap_us: u64,
}

impl Default for SpinlockConfig {
    fn default() -> Self {
        SpinlockConfig {
            max_spin: 1024,
            backoff_initial_us: 8,
            backoff_cap_us: 1024,
        }
    }
}

/// One member of the contention family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentionWorkload {
    /// Family index, 1..=7.
    pub k: u32,
    /// Light worker count.
    pub n_light: u32,
    /// Operations per critical section for light workers.
    pub light_ops: u32,
    /// Operations per critical section for the single heavy worker.
    pub heavy_ops: u32,
    pub duration_ms: u64,
}

impl Default for ContentionWorkload {
    fn default() -> Self {
        let parallelism = std::thread::available_parallelism()
            .map(|n| n.get() as u32)
            .unwrap_or(2);
        ContentionWorkload {
            k: 1,
            n_light: parallelism.saturating_sub(1).max(2),
            light_ops: 16,
            heavy_ops: HEAVY_OPS_SCALE,
            duration_ms: 500,
        }
    }
}

/// The 7-member family: `k = 1..=7`, `heavy_ops = k * 256`, everything else
/// from the template.
pub fn workload_family(template: &ContentionWorkload) -> Vec<ContentionWorkload> {
    (1..=7)
        .map(|k| ContentionWorkload {
            k,
            heavy_ops: k * HEAVY_OPS_SCALE,
            ..*template
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct SpinlockMetrics {
    /// Critical-section operations per wall second, all workers.
    pub throughput_ops_s: f64,
    pub acquisitions: u64,
    /// Acquisitions that missed the uncontended fast path.
    pub contended_acquisitions: u64,
    /// Backoff sleeps taken after exhausting a spin budget.
    pub backoff_events: u64,
    pub p99_acquire_ns: f64,
    /// Subsampled acquire latencies (every 8th acquisition).
    pub acquire_ns: Vec<f64>,
    /// Value of the non-atomic counter protected by the lock; equals
    /// `acquisitions` iff mutual exclusion held.
    pub protected_count: u64,
    /// Set when the host offers fewer than 2 execution units.
    pub low_fidelity: bool,
}

struct RawSpinlock {
    locked: AtomicBool,
}

impl RawSpinlock {
    fn new() -> Self {
        RawSpinlock {
            locked: AtomicBool::new(false),
        }
    }

    fn try_acquire(&self) -> bool {
        self.locked
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .is_ok()
    }

    fn release(&self) {
        self.locked.store(false, Ordering::Release);
    }
}

struct ProtectedCell(UnsafeCell<u64>);

// SAFETY: the cell is only written between acquire and release of the
// spinlock; that is exactly the property the benchmark measures.
unsafe impl Sync for ProtectedCell {}

#[derive(Default)]
struct WorkerStats {
    acquisitions: u64,
    contended: u64,
    backoff_events: u64,
    ops_done: u64,
    acquire_ns: Vec<f64>,
}

/// Acquire with spin-then-backoff. Test-and-test-and-set polling; after
/// `max_spin` polls, sleep and double the sleep up to the cap.
fn acquire(lock: &RawSpinlock, config: &SpinlockConfig, stats: &mut WorkerStats) {
    if lock.try_acquire() {
        return;
    }
    stats.contended += 1;
    let mut backoff_us = config.backoff_initial_us.max(1);
    loop {
        let mut polls = 0u64;
        while polls < config.max_spin {
            if !lock.locked.load(Ordering::Relaxed) && lock.try_acquire() {
                return;
            }
            std::hint::spin_loop();
            polls += 1;
        }
        stats.backoff_events += 1;
        std::thread::sleep(Duration::from_micros(backoff_us));
        backoff_us = (backoff_us * 2).min(config.backoff_cap_us.max(1));
        if lock.try_acquire() {
            return;
        }
    }
}

fn lcg_kernel(mut state: u64, ops: u32) -> u64 {
    for _ in 0..ops {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
    }
    black_box(state)
}

fn worker_loop(
    lock: &RawSpinlock,
    protected: &ProtectedCell,
    config: &SpinlockConfig,
    ops: u32,
    duration: Duration,
    seed: u64,
) -> WorkerStats {
    let mut stats = WorkerStats::default();
    let mut state = seed;
    let start = Instant::now();
    while start.elapsed() < duration {
        let sampled = stats.acquisitions & LATENCY_SAMPLE_MASK == 0;
        let t0 = sampled.then(Instant::now);
        acquire(lock, config, &mut stats);
        if let Some(t0) = t0 {
            stats.acquire_ns.push(t0.elapsed().as_nanos() as f64);
        }
        stats.acquisitions += 1;
        // critical section
        // SAFETY: guarded by the spinlock; this is the mutual exclusion oracle.
        unsafe {
            *protected.0.get() += 1;
        }
        state = lcg_kernel(state, ops);
        lock.release();
        stats.ops_done += ops as u64;
    }
    black_box(state);
    stats
}

/// Run `n_light` light workers plus one heavy worker against a shared
/// spinlock for `duration_ms`, returning counted lock behavior plus the
/// process counter delta.
pub fn spinlock_run(
    config: &SpinlockConfig,
    workload: &ContentionWorkload,
    seed: u64,
) -> (SpinlockMetrics, CounterDelta) {
    let before = sample_counters();
    let lock = RawSpinlock::new();
    let protected = ProtectedCell(UnsafeCell::new(0));
    let duration = Duration::from_millis(workload.duration_ms);
    let start = Instant::now();

    let mut all_stats: Vec<WorkerStats> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..workload.n_light + 1 {
            let ops = if worker == 0 {
                workload.heavy_ops
            } else {
                workload.light_ops
            };
            let lock = &lock;
            let protected = &protected;
            let worker_seed = seed ^ (worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            handles.push(scope.spawn(move || {
                worker_loop(lock, protected, config, ops, duration, worker_seed)
            }));
        }
        for handle in handles {
            all_stats.push(handle.join().expect("worker panicked"));
        }
    });
    let elapsed = start.elapsed().as_secs_f64();

    let mut metrics = SpinlockMetrics {
        low_fidelity: std::thread::available_parallelism()
            .map(|n| n.get() < 2)
            .unwrap_or(true),
        ..SpinlockMetrics::default()
    };
    let mut total_ops = 0u64;
    for stats in all_stats {
        metrics.acquisitions += stats.acquisitions;
        metrics.contended_acquisitions += stats.contended;
        metrics.backoff_events += stats.backoff_events;
        metrics.acquire_ns.extend(stats.acquire_ns);
        total_ops += stats.ops_done;
    }
    metrics.throughput_ops_s = total_ops as f64 / elapsed;
    // SAFETY: all workers joined; exclusive access.
    metrics.protected_count = unsafe { *protected.0.get() };
    if !metrics.acquire_ns.is_empty() {
        let agg = crate::telemetry::aggregate(0, &metrics.acquire_ns).expect("non-empty");
        metrics.p99_acquire_ns = agg.p99;
    }
    let after = sample_counters();
    (metrics, counter_delta(&before, &after))
}
