//! Resource Performance Interfaces: declared resource/performance
//! envelopes per (component, workload), checked against run records.
//!
//! An envelope lives in its own JSON file, never in component code. Caps
//! are inclusive: a measurement exactly on the cap passes, so an envelope
//! learned with margin zero accepts its own training runs. A cap whose
//! measurement is absent from a record is a violation, not a skip —
//! silently unmeasured regressions are what a gate exists to catch.
//!
//! Measurement conventions against a [`RunRecord`]:
//! - `cpu_ns_max` / `max_rss_bytes_max` read the counter delta fields;
//! - `latency_p99_ns_max` reads the worst p99 among metrics with unit `ns`;
//! - `throughput_ops_s_min` reads the lowest mean among metrics with unit
//!   `ops/s`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::RunRecord;

#[derive(Debug, Error, PartialEq)]
pub enum RpiError {
    #[error("envelope must declare at least one cap")]
    NoCaps,
    #[error("cap {0} must be positive")]
    NonPositiveCap(&'static str),
    #[error("margin must be finite and >= 0")]
    BadMargin,
    #[error("cannot learn an envelope from zero runs")]
    EmptyRuns,
    #[error("training runs span multiple component/workload pairs: ({0}, {1}) and ({2}, {3})")]
    MixedRuns(String, String, String, String),
    #[error(
        "run {run_id} belongs to ({component}, {workload}), envelope covers ({envelope_component}, {envelope_workload})"
    )]
    Mismatch {
        run_id: String,
        component: String,
        workload: String,
        envelope_component: String,
        envelope_workload: String,
    },
    #[error("no cap-relevant measurement is present in every training run")]
    NothingMeasured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RpiSource {
    Declared,
    Learned,
}

/// Inclusive caps; absent fields are not checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RpiCaps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_ns_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rss_bytes_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_p99_ns_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_ops_s_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpiEnvelope {
    pub component: String,
    pub workload: String,
    pub caps: RpiCaps,
    pub source: RpiSource,
}

impl RpiEnvelope {
    pub fn validate(&self) -> Result<(), RpiError> {
        let caps = &self.caps;
        let declared = [
            ("cpu_ns_max", caps.cpu_ns_max),
            ("max_rss_bytes_max", caps.max_rss_bytes_max),
            ("latency_p99_ns_max", caps.latency_p99_ns_max),
            ("throughput_ops_s_min", caps.throughput_ops_s_min),
        ];
        if declared.iter().all(|(_, v)| v.is_none()) {
            return Err(RpiError::NoCaps);
        }
        for (name, value) in declared {
            if let Some(v) = value {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(RpiError::NonPositiveCap(name));
                }
            }
        }
        Ok(())
    }
}

/// One failed cap: the limit and what was measured (`None` when the record
/// carries no measurement for a declared cap).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpiViolation {
    pub cap: String,
    pub limit: f64,
    pub measured: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpiVerdict {
    pub pass: bool,
    pub violations: Vec<RpiViolation>,
}

/// Worst (largest) p99 among ns-unit metrics.
fn measured_latency_p99_ns(run: &RunRecord) -> Option<f64> {
    run.metrics
        .iter()
        .filter(|m| m.unit == "ns")
        .map(|m| m.p99)
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// Worst (smallest) mean among ops/s-unit metrics.
fn measured_throughput_ops_s(run: &RunRecord) -> Option<f64> {
    run.metrics
        .iter()
        .filter(|m| m.unit == "ops/s")
        .map(|m| m.mean())
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
}

fn measured_cpu_ns(run: &RunRecord) -> Option<f64> {
    run.counters.cpu_ns.map(|v| v as f64)
}

fn measured_max_rss_bytes(run: &RunRecord) -> Option<f64> {
    run.counters.max_rss_bytes.map(|v| v as f64)
}

/// Check one run against one envelope. Inclusive semantics: `measured <=
/// cap` passes maxima, `measured >= min` passes the throughput floor.
pub fn check_rpi(envelope: &RpiEnvelope, run: &RunRecord) -> Result<RpiVerdict, RpiError> {
    if run.component_name() != envelope.component || run.workload_name() != envelope.workload {
        return Err(RpiError::Mismatch {
            run_id: run.run_id.clone(),
            component: run.component_name().to_string(),
            workload: run.workload_name().to_string(),
            envelope_component: envelope.component.clone(),
            envelope_workload: envelope.workload.clone(),
        });
    }
    let mut violations = Vec::new();
    let mut check_max = |cap_name: &str, limit: Option<f64>, measured: Option<f64>| {
        if let Some(limit) = limit {
            match measured {
                Some(m) if m <= limit => {}
                other => violations.push(RpiViolation {
                    cap: cap_name.to_string(),
                    limit,
                    measured: other,
                }),
            }
        }
    };
    check_max("cpu_ns_max", envelope.caps.cpu_ns_max, measured_cpu_ns(run));
    check_max(
        "max_rss_bytes_max",
        envelope.caps.max_rss_bytes_max,
        measured_max_rss_bytes(run),
    );
    check_max(
        "latency_p99_ns_max",
        envelope.caps.latency_p99_ns_max,
        measured_latency_p99_ns(run),
    );
    if let Some(limit) = envelope.caps.throughput_ops_s_min {
        match measured_throughput_ops_s(run) {
            Some(m) if m >= limit => {}
            other => violations.push(RpiViolation {
                cap: "throughput_ops_s_min".to_string(),
                limit,
                measured: other,
            }),
        }
    }
    Ok(RpiVerdict {
        pass: violations.is_empty(),
        violations,
    })
}

/// Learn an envelope from uniform (component, workload) runs: maxima become
/// `observed_max * (1 + margin)`, the throughput floor becomes
/// `observed_min * (1 - margin)`. A cap is emitted only when every training
/// run measured it (and the resulting cap is positive), so the envelope
/// always accepts its own training set.
pub fn learn_envelope(runs: &[RunRecord], margin: f64) -> Result<RpiEnvelope, RpiError> {
    if runs.is_empty() {
        return Err(RpiError::EmptyRuns);
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(RpiError::BadMargin);
    }
    let component = runs[0].component_name().to_string();
    let workload = runs[0].workload_name().to_string();
    for run in runs {
        if run.component_name() != component || run.workload_name() != workload {
            return Err(RpiError::MixedRuns(
                component,
                workload,
                run.component_name().to_string(),
                run.workload_name().to_string(),
            ));
        }
    }

    fn all_measured(
        runs: &[RunRecord],
        extract: impl Fn(&RunRecord) -> Option<f64>,
    ) -> Option<Vec<f64>> {
        runs.iter().map(extract).collect()
    }
    let max_cap = |values: Option<Vec<f64>>| -> Option<f64> {
        let values = values?;
        let max = values.into_iter().fold(f64::NEG_INFINITY, f64::max);
        let cap = max * (1.0 + margin);
        (cap > 0.0).then_some(cap)
    };
    let min_cap = |values: Option<Vec<f64>>| -> Option<f64> {
        let values = values?;
        let min = values.into_iter().fold(f64::INFINITY, f64::min);
        let cap = min * (1.0 - margin);
        (cap > 0.0).then_some(cap)
    };

    let caps = RpiCaps {
        cpu_ns_max: max_cap(all_measured(runs, measured_cpu_ns)),
        max_rss_bytes_max: max_cap(all_measured(runs, measured_max_rss_bytes)),
        latency_p99_ns_max: max_cap(all_measured(runs, measured_latency_p99_ns)),
        throughput_ops_s_min: min_cap(all_measured(runs, measured_throughput_ops_s)),
    };
    let envelope = RpiEnvelope {
        component,
        workload,
        caps,
        source: RpiSource::Learned,
    };
    envelope.validate().map_err(|e| match e {
        RpiError::NoCaps => RpiError::NothingMeasured,
        other => other,
    })?;
    Ok(envelope)
}

/// One (run, envelope) check in a gate report.
#[derive(Debug, Clone, Serialize)]
pub struct GateLine {
    pub run_id: String,
    pub component: String,
    pub workload: String,
    pub verdict: RpiVerdict,
}

/// Result of gating a run set against a set of envelopes. Any violation
/// fails the gate; runs matching no envelope are warnings, not failures.
#[derive(Debug, Clone, Default, Serialize)]
pub struct GateReport {
    pub lines: Vec<GateLine>,
    pub unmatched_run_ids: Vec<String>,
    pub checked: usize,
    pub failed: usize,
}

impl GateReport {
    pub fn pass(&self) -> bool {
        self.failed == 0
    }

    /// 0 on pass, 2 on any violation.
    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            2
        }
    }

    /// Human-readable lines plus a machine-readable JSON summary block.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            if line.verdict.pass {
                out.push_str(&format!(
                    "PASS {} against ({}, {})\n",
                    line.run_id, line.component, line.workload
                ));
            } else {
                for v in &line.verdict.violations {
                    let measured = v
                        .measured
                        .map(|m| format!("{m}"))
                        .unwrap_or_else(|| "unmeasured".to_string());
                    out.push_str(&format!(
                        "FAIL {} against ({}, {}): {} limit {} measured {}\n",
                        line.run_id, line.component, line.workload, v.cap, v.limit, measured
                    ));
                }
            }
        }
        for run_id in &self.unmatched_run_ids {
            out.push_str(&format!("WARN {run_id} matched no envelope\n"));
        }
        let summary = serde_json::json!({
            "checked": self.checked,
            "failed": self.failed,
            "warnings": self.unmatched_run_ids.len(),
            "pass": self.pass(),
        });
        out.push_str(&format!("summary {summary}\n"));
        out
    }
}

/// Match every run to every envelope with its (component, workload) and
/// aggregate the verdicts.
pub fn rpi_gate(envelopes: &[RpiEnvelope], runs: &[RunRecord]) -> GateReport {
    let mut report = GateReport::default();
    for run in runs {
        let mut matched = false;
        for envelope in envelopes {
            if envelope.component == run.component_name()
                && envelope.workload == run.workload_name()
            {
                matched = true;
                let verdict = check_rpi(envelope, run)
                    .expect("component/workload matched before checking");
                report.checked += 1;
                if !verdict.pass {
                    report.failed += 1;
                }
                report.lines.push(GateLine {
                    run_id: run.run_id.clone(),
                    component: envelope.component.clone(),
                    workload: envelope.workload.clone(),
                    verdict,
                });
            }
        }
        if !matched {
            report.unmatched_run_ids.push(run.run_id.clone());
        }
    }
    report
}
