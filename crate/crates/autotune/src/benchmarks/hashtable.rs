//! Collision-instrumented separate-chaining hash table benchmark.
//!
//! A collision is an insert of a *new* key into a non-empty bucket; rehash
//! traffic during resizes is not counted. Probe length is the number of
//! chain entries examined by an operation. Both are exactly reproducible
//! from `(config, seed)`; only the latency samples vary run to run.
//! `resident_bytes` is computed analytically (8 bytes per bucket slot plus
//! 48 per node) so the memory axis stays deterministic too.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::telemetry::{counter_delta, sample_counters, CounterDelta};

pub const BUCKET_SLOT_BYTES: u64 = 8;
pub const NODE_BYTES: u64 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashFn {
    MultiplyShift,
    Fnv1a,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashTableConfig {
    /// Initial buckets = 2^k, k in [0, 24].
    pub bucket_count_log2: u32,
    /// Resize trigger: grow when count/buckets exceeds this. [0.25, 8.0].
    pub max_load_factor: f64,
    /// A resize multiplies the bucket count by 2^g, g in [1, 3].
    pub growth_log2: u32,
    pub hash_fn: HashFn,
    /// Off for deterministic collision studies.
    pub resizing_enabled: bool,
}

impl Default for HashTableConfig {
    fn default() -> Self {
        HashTableConfig {
            bucket_count_log2: 4,
            max_load_factor: 4.0,
            growth_log2: 1,
            hash_fn: HashFn::MultiplyShift,
            resizing_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyDist {
    Uniform,
    Zipf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashTableWorkload {
    pub n_keys: u64,
    pub key_dist: KeyDist,
    /// Zipf exponent, used when `key_dist` is zipf.
    pub zipf_s: f64,
    /// Fraction of the mixed phase that are lookups.
    pub read_fraction: f64,
}

impl Default for HashTableWorkload {
    fn default() -> Self {
        HashTableWorkload {
            n_keys: 10_000,
            key_dist: KeyDist::Uniform,
            zipf_s: 1.1,
            read_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct HashTableMetrics {
    /// New-key inserts that landed in a non-empty bucket.
    pub collisions: u64,
    /// Chain entries examined, one sample per operation.
    pub probe_len: Vec<f64>,
    /// One sample per operation.
    pub op_latency_ns: Vec<f64>,
    /// Bucket array + nodes, analytic.
    pub resident_bytes: u64,
    pub inserts: u64,
    pub lookups: u64,
}

/// Separate chaining over power-of-two buckets. Chains keep insertion
/// order; probes scan from the oldest entry.
pub struct ChainedTable {
    buckets: Vec<Vec<(u64, u64)>>,
    count: u64,
    collisions: u64,
    hash_fn: HashFn,
    max_load_factor: f64,
    growth_log2: u32,
    resizing_enabled: bool,
}

fn hash_bucket(hash_fn: HashFn, key: u64, bucket_count_log2: u32) -> usize {
    match hash_fn {
        HashFn::MultiplyShift => {
            if bucket_count_log2 == 0 {
                0
            } else {
                (key.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> (64 - bucket_count_log2)) as usize
            }
        }
        HashFn::Fnv1a => {
            let mut h = 0xcbf2_9ce4_8422_2325u64;
            for b in key.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
            (h & ((1u64 << bucket_count_log2) - 1)) as usize
        }
    }
}

impl ChainedTable {
    pub fn new(config: &HashTableConfig) -> Self {
        ChainedTable {
            buckets: vec![Vec::new(); 1usize << config.bucket_count_log2],
            count: 0,
            collisions: 0,
            hash_fn: config.hash_fn,
            max_load_factor: config.max_load_factor,
            growth_log2: config.growth_log2,
            resizing_enabled: config.resizing_enabled,
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    pub fn resident_bytes(&self) -> u64 {
        self.buckets.len() as u64 * BUCKET_SLOT_BYTES + self.count * NODE_BYTES
    }

    fn bucket_of(&self, key: u64) -> usize {
        hash_bucket(self.hash_fn, key, self.buckets.len().trailing_zeros())
    }

    /// Insert or update. Returns the probe length: entries examined before
    /// the key was found or the chain end was reached.
    pub fn insert(&mut self, key: u64, value: u64) -> u64 {
        let b = self.bucket_of(key);
        let chain = &mut self.buckets[b];
        for (probed, entry) in chain.iter_mut().enumerate() {
            if entry.0 == key {
                entry.1 = value;
                return probed as u64 + 1;
            }
        }
        let probe = chain.len() as u64;
        if !chain.is_empty() {
            self.collisions += 1;
        }
        chain.push((key, value));
        self.count += 1;
        if self.resizing_enabled
            && self.count as f64 / self.buckets.len() as f64 > self.max_load_factor
        {
            self.grow();
        }
        probe
    }

    /// Lookup. Returns `(value, probe length)`; a miss probes the whole
    /// chain.
    pub fn get(&self, key: u64) -> (Option<u64>, u64) {
        let chain = &self.buckets[self.bucket_of(key)];
        for (probed, entry) in chain.iter().enumerate() {
            if entry.0 == key {
                return (Some(entry.1), probed as u64 + 1);
            }
        }
        (None, chain.len() as u64)
    }

    fn grow(&mut self) {
        let new_log2 =
            (self.buckets.len().trailing_zeros() + self.growth_log2).min(24);
        let mut new_buckets: Vec<Vec<(u64, u64)>> = vec![Vec::new(); 1usize << new_log2];
        for chain in self.buckets.drain(..) {
            for (key, value) in chain {
                let b = hash_bucket(self.hash_fn, key, new_log2);
                new_buckets[b].push((key, value));
            }
        }
        self.buckets = new_buckets;
    }
}

enum KeyStream {
    Uniform,
    Zipf(rand_distr::Zipf<f64>),
}

impl KeyStream {
    fn new(workload: &HashTableWorkload) -> Self {
        match workload.key_dist {
            KeyDist::Uniform => KeyStream::Uniform,
            KeyDist::Zipf => KeyStream::Zipf(
                rand_distr::Zipf::new(workload.n_keys.max(1) as f64, workload.zipf_s)
                    .expect("zipf parameters validated by workload"),
            ),
        }
    }

    fn next(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            KeyStream::Uniform => rng.random::<u64>(),
            KeyStream::Zipf(z) => z.sample(rng) as u64,
        }
    }
}

/// Insert `n_keys` keys, then run `n_keys` mixed operations
/// (`read_fraction` lookups, the rest inserts), recording collisions,
/// per-op probe lengths, and per-op latencies.
pub fn hashtable_run(
    config: &HashTableConfig,
    workload: &HashTableWorkload,
    seed: u64,
) -> (HashTableMetrics, CounterDelta) {
    let before = sample_counters();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = KeyStream::new(workload);
    let mut table = ChainedTable::new(config);
    let mut metrics = HashTableMetrics::default();
    let n = workload.n_keys as usize;
    metrics.probe_len.reserve(2 * n);
    metrics.op_latency_ns.reserve(2 * n);
    let mut inserted: Vec<u64> = Vec::with_capacity(n);

    for _ in 0..n {
        let key = stream.next(&mut rng);
        let t0 = Instant::now();
        let probe = table.insert(key, key ^ 0xA5A5);
        metrics.op_latency_ns.push(t0.elapsed().as_nanos() as f64);
        metrics.probe_len.push(probe as f64);
        metrics.inserts += 1;
        inserted.push(key);
    }

    for _ in 0..n {
        let is_read = rng.random::<f64>() < workload.read_fraction;
        if is_read {
            let key = match workload.key_dist {
                // uniform lookups target known keys; zipf lookups follow the
                // same rank distribution as inserts
                KeyDist::Uniform => inserted[rng.random_range(0..inserted.len())],
                KeyDist::Zipf => stream.next(&mut rng),
            };
            let t0 = Instant::now();
            let (_, probe) = table.get(key);
            metrics.op_latency_ns.push(t0.elapsed().as_nanos() as f64);
            metrics.probe_len.push(probe as f64);
            metrics.lookups += 1;
        } else {
            let key = stream.next(&mut rng);
            let t0 = Instant::now();
            let probe = table.insert(key, key);
            metrics.op_latency_ns.push(t0.elapsed().as_nanos() as f64);
            metrics.probe_len.push(probe as f64);
            metrics.inserts += 1;
            inserted.push(key);
        }
    }

    metrics.collisions = table.collisions();
    metrics.resident_bytes = table.resident_bytes();
    let after = sample_counters();
    (metrics, counter_delta(&before, &after))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn no_resize(bucket_count_log2: u32) -> HashTableConfig {
        HashTableConfig {
            bucket_count_log2,
            resizing_enabled: false,
            ..HashTableConfig::default()
        }
    }

    #[test]
    fn single_bucket_all_but_first_distinct_key_collides() {
        let mut table = ChainedTable::new(&no_resize(0));
        for key in 0..100u64 {
            table.insert(key, key);
        }
        assert_eq!(table.collisions(), 99);
        assert_eq!(table.len(), 100);
    }

    #[test]
    fn updates_do_not_count_as_collisions() {
        let mut table = ChainedTable::new(&no_resize(0));
        table.insert(1, 10);
        table.insert(1, 20);
        assert_eq!(table.collisions(), 0);
        assert_eq!(table.len(), 1);
        assert_eq!(table.get(1).0, Some(20));
    }

    #[test]
    fn lookups_match_reference_map_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut table = ChainedTable::new(&HashTableConfig::default());
        let mut oracle: HashMap<u64, u64> = HashMap::new();
        for _ in 0..100_000 {
            let key = rng.random_range(0..5_000u64);
            if rng.random::<bool>() {
                let value = rng.random::<u64>();
                table.insert(key, value);
                oracle.insert(key, value);
            } else {
                let (got, _) = table.get(key);
                assert_eq!(got, oracle.get(&key).copied());
            }
        }
        assert_eq!(table.len(), oracle.len() as u64);
    }

    #[test]
    fn collision_count_matches_closed_form_within_5_sigma() {
        // n uniform keys into B buckets without resizing: expected
        // collisions are n - B(1 - (1 - 1/B)^n); sigma comes from a
        // balls-into-bins simulation independent of the table code.
        let n = 1000u64;
        let b = 1024u64;
        let expected = n as f64 - b as f64 * (1.0 - (1.0 - 1.0 / b as f64).powi(n as i32));

        let mut sim_rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 300;
        let mut sim = Vec::with_capacity(trials);
        for _ in 0..trials {
            let mut bins = vec![0u32; b as usize];
            let mut collisions = 0u64;
            for _ in 0..n {
                let bin = sim_rng.random_range(0..b as usize);
                if bins[bin] > 0 {
                    collisions += 1;
                }
                bins[bin] += 1;
            }
            sim.push(collisions as f64);
        }
        let mean = sim.iter().sum::<f64>() / trials as f64;
        let sigma =
            (sim.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / trials as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sigma, "simulation drifted");

        for hash_fn in [HashFn::MultiplyShift, HashFn::Fnv1a] {
            let config = HashTableConfig {
                bucket_count_log2: 10,
                hash_fn,
                resizing_enabled: false,
                ..HashTableConfig::default()
            };
            let workload = HashTableWorkload {
                n_keys: n,
                key_dist: KeyDist::Uniform,
                read_fraction: 1.0, // mixed phase all reads: no extra inserts
                ..HashTableWorkload::default()
            };
            let (metrics, _) = hashtable_run(&config, &workload, 77);
            assert!(
                (metrics.collisions as f64 - expected).abs() < 5.0 * sigma,
                "{hash_fn:?}: {} collisions, expected {expected:.1} +/- {:.1}",
                metrics.collisions,
                5.0 * sigma
            );
        }
    }

    #[test]
    fn doubling_buckets_does_not_increase_expected_collisions() {
        let workload = HashTableWorkload {
            n_keys: 2000,
            key_dist: KeyDist::Uniform,
            read_fraction: 1.0,
            ..HashTableWorkload::default()
        };
        let mut previous = f64::INFINITY;
        for bucket_count_log2 in [6u32, 7, 8, 9, 10] {
            let config = no_resize(bucket_count_log2);
            let total: u64 = (0..20)
                .map(|seed| hashtable_run(&config, &workload, seed).0.collisions)
                .sum();
            let mean = total as f64 / 20.0;
            assert!(
                mean <= previous,
                "collisions grew when doubling buckets: {previous} -> {mean}"
            );
            previous = mean;
        }
    }

    #[test]
    fn deterministic_metrics_for_fixed_seed() {
        let config = no_resize(5);
        let workload = HashTableWorkload {
            n_keys: 3000,
            key_dist: KeyDist::Zipf,
            zipf_s: 1.1,
            read_fraction: 0.5,
            ..HashTableWorkload::default()
        };
        let (a, _) = hashtable_run(&config, &workload, 9);
        let (b, _) = hashtable_run(&config, &workload, 9);
        assert_eq!(a.collisions, b.collisions);
        assert_eq!(a.probe_len, b.probe_len);
        assert_eq!(a.resident_bytes, b.resident_bytes);
        assert_eq!(a.inserts, b.inserts);
        assert_eq!(a.lookups, b.lookups);
    }

    #[test]
    fn resize_keeps_load_factor_bounded() {
        let config = HashTableConfig {
            bucket_count_log2: 2,
            max_load_factor: 2.0,
            growth_log2: 1,
            hash_fn: HashFn::MultiplyShift,
            resizing_enabled: true,
        };
        let mut table = ChainedTable::new(&config);
        for key in 0..10_000u64 {
            table.insert(key.wrapping_mul(0x2545_F491_4F6C_DD1D), key);
        }
        let load = table.len() as f64 / table.bucket_count() as f64;
        assert!(load <= 2.0, "load factor {load} above trigger");
        // 10_000 entries at load <= 2.0 need >= 5000 buckets
        assert!(table.bucket_count() >= 4096);
    }

    #[test]
    fn resident_bytes_monotone_in_bucket_count() {
        let workload = HashTableWorkload {
            n_keys: 1000,
            read_fraction: 1.0,
            ..HashTableWorkload::default()
        };
        let mut previous = 0u64;
        for bucket_count_log2 in [4u32, 8, 12] {
            let (m, _) = hashtable_run(&no_resize(bucket_count_log2), &workload, 1);
            assert!(m.resident_bytes > previous);
            previous = m.resident_bytes;
        }
    }
}
