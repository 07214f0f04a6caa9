//! Counter smoke checks that need a quiet process: RSS high-water deltas
//! are meaningless once other tests have already ballooned the process, so
//! these run in their own test binary, sequentially within one test.

use std::time::{Duration, Instant};

use autotune::telemetry::{counter_delta, sample_counters};

#[test]
fn cpu_and_rss_deltas_track_real_work() {
    // --- busy spin: cpu time tracks wall time on an idle core ---
    let before = sample_counters();
    let start = Instant::now();
    while start.elapsed() < Duration::from_millis(50) {
        std::hint::black_box(start.elapsed());
    }
    let after = sample_counters();
    let delta = counter_delta(&before, &after);
    assert!(delta.wall_ns >= 50_000_000);
    if let Some(cpu) = delta.cpu_ns {
        let ratio = cpu as f64 / delta.wall_ns as f64;
        assert!(
            (0.5..=1.5).contains(&ratio),
            "cpu/wall ratio {ratio} outside [0.5, 1.5] (cpu {cpu}, wall {})",
            delta.wall_ns
        );
    } else {
        panic!("cpu_ns expected on this platform");
    }

    // --- allocate-and-touch 64 MiB: high-water mark moves by >= 32 MiB ---
    let before = sample_counters();
    let mut block = vec![0u8; 64 * 1024 * 1024];
    for chunk in block.chunks_mut(4096) {
        chunk[0] = 1;
    }
    std::hint::black_box(&block);
    let after = sample_counters();
    let delta = counter_delta(&before, &after);
    match delta.max_rss_bytes {
        Some(rss_delta) => assert!(
            rss_delta >= 32 * 1024 * 1024,
            "rss delta {rss_delta} below 32 MiB after touching 64 MiB"
        ),
        None => panic!("max_rss_bytes expected on this platform"),
    }
    drop(block);
}
