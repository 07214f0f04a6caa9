//! Full loop over the memory-mapped transport: register, enact with ACK
//! barriers, echo telemetry, aggregate — the two sides running as they
//! would in separate processes (separate mappings of the same file).

#![cfg(unix)]

use std::time::Duration;

use autotune::agent::{collect_window, enact, handshake, RemoteComponent};
use autotune::benchmarks::Workbench;
use autotune::channel::Transport;
use autotune::component::Component;
use autotune::telemetry::MetricCollector;
use autotune::tunables::{ComponentSpec, TunableDef, TunableValue};

fn probe_spec() -> ComponentSpec {
    ComponentSpec::new(11, "probe")
        .with_tunable(TunableDef::integer("depth", 1, 0, 64, 8))
        .with_tunable(TunableDef::real("gain", 2, 0.0, 2.0, 1.0))
        .with_metric(1, "echo", "value")
        .with_metric(2, "beat", "count")
}

#[test]
fn register_enact_echo_over_mmap_transport() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chan.shm");
    let agent_side = Transport::create(&path, 16).unwrap().into_agent().unwrap();
    let component_side = Transport::open(&path).unwrap().into_component().unwrap();

    let component_thread = std::thread::spawn(move || {
        let mut component =
            Component::register(component_side, probe_spec(), Duration::from_secs(5)).unwrap();
        // serve two enacted assignments, echoing each applied value
        for round in 0..2 {
            let mut seen = Vec::new();
            while seen.len() < 2 {
                component
                    .wait_config(Duration::from_secs(5), |name, value| {
                        seen.push((name.to_string(), value.clone()));
                    })
                    .unwrap();
            }
            for (i, (_, value)) in seen.iter().enumerate() {
                let echoed = match value {
                    TunableValue::Int(v) => *v as f64,
                    TunableValue::Real(v) => *v,
                    _ => unreachable!(),
                };
                component
                    .record_event(1, echoed, (round * 10 + i) as u64)
                    .unwrap();
            }
            component.record_event(2, 1.0, 100 + round as u64).unwrap();
        }
        (
            component.params().load_int(1).unwrap(),
            component.params().load_real(2).unwrap(),
        )
    });

    let mut agent = agent_side;
    let spec = handshake(&mut agent, Duration::from_secs(5)).unwrap();
    assert_eq!(spec, probe_spec());

    let mut collector = MetricCollector::new();
    for (depth, gain) in [(16i64, 0.5f64), (32, 1.5)] {
        let mut assignment = spec.default_assignment();
        assignment.set("depth", TunableValue::Int(depth));
        assignment.set("gain", TunableValue::Real(gain));
        enact(&mut agent, &spec, &assignment, &mut collector, Duration::from_secs(5)).unwrap();
        collect_window(&mut agent, &mut collector, Duration::from_millis(120)).unwrap();
    }

    let (final_depth, final_gain) = component_thread.join().unwrap();
    // param table holds the last enacted values, torn-free
    assert_eq!(final_depth, 32);
    assert_eq!(final_gain, 1.5);
    // echoes arrived in order: one per parameter per round
    assert_eq!(collector.samples(1).unwrap(), &[16.0, 0.5, 32.0, 1.5]);
    assert_eq!(collector.samples(2).unwrap(), &[1.0, 1.0]);
}

#[test]
fn remote_component_drives_like_a_workbench() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chan.shm");
    let agent_side = Transport::create(&path, 16).unwrap().into_agent().unwrap();
    let component_side = Transport::open(&path).unwrap().into_component().unwrap();

    let component_thread = std::thread::spawn(move || {
        let mut component =
            Component::register(component_side, probe_spec(), Duration::from_secs(5)).unwrap();
        let mut applied = 0;
        while applied < 2 {
            applied += component
                .wait_config(Duration::from_secs(5), |_, _| {})
                .unwrap();
        }
        // pretend to run a workload: emit samples derived from the params
        let depth = component.params().load_int(1).unwrap() as f64;
        for i in 0..4 {
            component.record_event(1, depth + i as f64, i).unwrap();
        }
    });

    let mut remote = RemoteComponent::connect(
        agent_side,
        Duration::from_secs(5),
        Duration::from_millis(150),
    )
    .unwrap();
    let mut assignment = remote.spec().default_assignment();
    assignment.set("depth", TunableValue::Int(40));
    remote.apply(&assignment).unwrap();
    let mut collector = MetricCollector::new();
    remote.run(&mut collector).unwrap();
    component_thread.join().unwrap();

    assert_eq!(collector.samples(1).unwrap(), &[40.0, 41.0, 42.0, 43.0]);
}
