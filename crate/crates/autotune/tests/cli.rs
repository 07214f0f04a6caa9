//! End-to-end checks of the `autotune` binary: subcommands, formats, and
//! the documented exit codes (0 ok, 1 usage/config, 2 RPI violation, 3
//! runtime error).

use std::path::Path;
use std::process::{Command, Output};

fn autotune() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autotune"))
}

fn write_json(path: &Path, value: &serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn synthetic_config(out: Option<&Path>, budget: Option<u64>) -> serde_json::Value {
    let mut config = serde_json::json!({
        "benchmark": "synthetic",
        "workload": {"surface": "quadratic1d"},
        "objective": {"metric": "objective", "direction": "minimize", "aggregate": "mean"},
        "optimizer": {"kind": "rs", "seed": 5, "strategy": "all_at_once", "slice": 10},
        "episode_id": "cli-test"
    });
    if let Some(out) = out {
        config["out"] = serde_json::json!(out);
    }
    if let Some(budget) = budget {
        config["optimizer"]["budget"] = serde_json::json!(budget);
    }
    config
}

#[test]
fn run_prints_a_parseable_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_json(&config, &synthetic_config(None, None));
    let output = autotune().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let record: serde_json::Value = serde_json::from_str(stdout(&output).trim()).unwrap();
    assert_eq!(record["benchmark"], "synthetic");
    assert_eq!(record["iteration"], 0);
    assert_eq!(record["schema_version"], 1);
    // default assignment of the quadratic surface evaluates to (0.5-0.7)^2
    let value = record["objective"]["value"].as_f64().unwrap();
    assert!((value - 0.04).abs() < 1e-12);
}

#[test]
fn run_honors_an_explicit_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    let mut config = synthetic_config(None, None);
    config["assignment"] = serde_json::json!({"x": 0.7});
    write_json(&config_path, &config);
    let output = autotune().args(["run", "--config"]).arg(&config_path).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let record: serde_json::Value = serde_json::from_str(stdout(&output).trim()).unwrap();
    assert_eq!(record["objective"]["value"].as_f64().unwrap(), 0.0);
}

#[test]
fn usage_errors_exit_1() {
    // unknown subcommand
    let output = autotune().arg("bogus").output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    // missing config file
    let output = autotune()
        .args(["run", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    // invalid config json
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, "not json").unwrap();
    let output = autotune().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    // optimize without a budget
    let config2 = dir.path().join("config2.json");
    write_json(&config2, &synthetic_config(None, None));
    let output = autotune().args(["optimize", "--config"]).arg(&config2).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn optimize_then_report_all_formats() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let runs = dir.path().join("runs.jsonl");
    write_json(&config, &synthetic_config(Some(&runs), Some(8)));

    let output = autotune().args(["optimize", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(stdout(&output).contains("best"));

    // table
    let output = autotune().args(["report", "--runs"]).arg(&runs).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let table = stdout(&output);
    assert!(table.contains("cli-test"));
    assert!(table.contains("synthetic"));

    // json
    let output = autotune()
        .args(["report", "--format", "json", "--runs"])
        .arg(&runs)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    let episodes = report["episodes"].as_array().unwrap();
    assert_eq!(episodes.len(), 1);
    assert_eq!(episodes[0]["runs"], 8);
    let trace = episodes[0]["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 8);
    // trace is non-increasing for minimization
    let values: Vec<f64> = trace.iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]));

    // csv: header plus one row per run, plottable columns
    let output = autotune()
        .args(["report", "--format", "csv", "--runs"])
        .arg(&runs)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let csv = stdout(&output);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "episode_id,benchmark,optimizer,strategy,iteration,objective,best_so_far"
    );
    assert_eq!(lines.len(), 9);
    assert!(lines[1].starts_with("cli-test,synthetic,rs,all_at_once,0,"));
}

#[test]
fn report_on_unreadable_store_exits_3() {
    let output = autotune()
        .args(["report", "--runs", "/nonexistent/runs.jsonl"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn rpi_learn_and_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let runs = dir.path().join("runs.jsonl");
    let envelope = dir.path().join("envelope.json");
    // hashtable runs so cpu/rss counters are meaningfully nonzero
    write_json(
        &config,
        &serde_json::json!({
            "benchmark": "hashtable",
            "workload": {"name": "gate", "n_keys": 2000, "seed": 1},
            "objective": {"metric": "probe_len", "direction": "minimize", "aggregate": "mean"},
            "optimizer": {"kind": "rs", "seed": 2, "budget": 6},
            "episode_id": "rpi-cli",
            "out": runs
        }),
    );
    let output = autotune().args(["optimize", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");

    let output = autotune()
        .args(["rpi", "learn", "--margin", "0.10", "--runs"])
        .arg(&runs)
        .arg("--out")
        .arg(&envelope)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&envelope).unwrap()).unwrap();
    assert_eq!(parsed["component"], "hashtable");
    assert_eq!(parsed["workload"], "gate");
    assert_eq!(parsed["source"], "learned");

    // training runs pass: exit 0
    let output = autotune()
        .args(["rpi", "check", "--runs"])
        .arg(&runs)
        .arg("--rpi")
        .arg(&envelope)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stdout(&output));
    assert!(stdout(&output).contains("summary"));

    // tighten the cpu cap below any plausible measurement: exit 2
    let mut tightened = parsed.clone();
    tightened["caps"] = serde_json::json!({"cpu_ns_max": 1.0});
    let tight_path = dir.path().join("tight.json");
    write_json(&tight_path, &tightened);
    let output = autotune()
        .args(["rpi", "check", "--runs"])
        .arg(&runs)
        .arg("--rpi")
        .arg(&tight_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{}", stdout(&output));
    assert!(stdout(&output).contains("FAIL"));

    // unreadable envelope: exit 3
    let output = autotune()
        .args(["rpi", "check", "--runs"])
        .arg(&runs)
        .args(["--rpi", "/nonexistent/envelope.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[cfg(unix)]
#[test]
fn agent_subcommand_serves_a_component() {
    use autotune::channel::Transport;
    use autotune::component::Component;
    use autotune::tunables::{ComponentSpec, TunableDef};
    use std::time::{Duration, Instant};

    let dir = tempfile::tempdir().unwrap();
    let transport_path = dir.path().join("chan.shm");
    let mut agent = autotune()
        .args(["agent", "--capacity", "8", "--timeout-secs", "10", "--duration-secs", "1"])
        .arg("--transport")
        .arg(&transport_path)
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();

    // wait for the agent to create the transport file
    let deadline = Instant::now() + Duration::from_secs(10);
    let transport = loop {
        if transport_path.exists() {
            if let Ok(t) = Transport::open(&transport_path) {
                break t;
            }
        }
        assert!(Instant::now() < deadline, "transport never appeared");
        std::thread::sleep(Duration::from_millis(20));
    };

    let spec = ComponentSpec::new(5, "cli-probe")
        .with_tunable(TunableDef::integer("level", 1, 0, 10, 5))
        .with_metric(1, "pulse", "count");
    let channel = transport.into_component().unwrap();
    let mut component =
        Component::register(channel, spec, Duration::from_secs(10)).unwrap();
    for i in 0..5 {
        component.record_event(1, i as f64, i).unwrap();
    }

    let output = agent.wait_with_output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let text = String::from_utf8_lossy(&output.stdout).into_owned();
    assert!(text.contains("cli-probe"), "{text}");
    assert!(text.contains("pulse"), "{text}");
}
