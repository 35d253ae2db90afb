//! Time-series and metrics emission.
//!
//! Every run writes the same columns whatever the controller; channels that
//! do not apply (the pendulum on a quadrotor-only run) are left empty in CSV
//! and `null` in JSON. Floats use the shortest decimal that round-trips.

use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quadpend_core::harness::{Metrics, SimLog, StepRecord};

use crate::file::Format;

pub const COLUMNS: [&str; 36] = [
    "t", "p_X", "p_Y", "p_Z", "v_X", "v_Y", "v_Z", "phi", "theta", "psi", "w_x", "w_y", "w_z", "a", "b", "a_dot",
    "b_dot", "u1", "u2", "u3", "u4", "f_z", "tau_x", "tau_y", "tau_z", "phi_d", "theta_d", "psi_d", "p_Xd", "p_Yd",
    "p_Zd", "a_d", "b_d", "clamped", "qp_relaxed", "fault",
];

/// One row in column order; `None` marks a channel that does not apply.
pub fn row_values(r: &StepRecord) -> Vec<Option<f64>> {
    let mut row = Vec::with_capacity(COLUMNS.len());
    row.push(Some(r.time));
    for v in [&r.quad.position, &r.quad.velocity, &r.quad.attitude, &r.quad.body_rates] {
        row.extend(v.iter().map(|x| Some(*x)));
    }
    match &r.pendulum {
        Some(p) => row.extend([p.a, p.b, p.a_dot, p.b_dot].map(Some)),
        None => row.extend([None; 4]),
    }
    row.extend(r.command.rotor().iter().map(|x| Some(*x)));
    let w = r.command.wrench();
    row.push(Some(w.thrust));
    row.extend(w.torque.iter().map(|x| Some(*x)));
    row.extend(r.setpoint.attitude.iter().map(|x| Some(*x)));
    row.extend(r.reference.iter().map(|x| Some(*x)));
    match &r.pendulum_reference {
        Some(p) => row.extend([Some(p.x), Some(p.y)]),
        None => row.extend([None; 2]),
    }
    let flag = |b: bool| Some(if b { 1.0 } else { 0.0 });
    row.extend([flag(r.clamped), flag(r.relaxed), flag(r.fault)]);
    row
}

fn push_number(out: &mut String, v: f64) {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        // integers print without the trailing `.0`
        write!(out, "{}", v as i64).expect("write to string");
    } else {
        write!(out, "{v:?}").expect("write to string");
    }
}

pub fn render_csv(log: &SimLog) -> String {
    let mut out = String::with_capacity(log.records.len() * 400);
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    for r in &log.records {
        for (i, v) in row_values(r).into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            if let Some(v) = v {
                push_number(&mut out, v);
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_json(log: &SimLog) -> String {
    let rows: Vec<Vec<Option<f64>>> = log.records.iter().map(row_values).collect();
    let doc = serde_json::json!({
        "scenario": log.scenario,
        "controller": log.controller.name(),
        "dt": log.dt,
        "columns": COLUMNS.to_vec(),
        "rows": rows,
    });
    let mut text = serde_json::to_string(&doc).expect("log serializes");
    text.push('\n');
    text
}

/// Parses a CSV produced by [`render_csv`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<Vec<Option<f64>>>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header != COLUMNS.join(",") {
        return Err(format!("unexpected header `{header}`"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|f| if f.is_empty() { Ok(None) } else { f.parse::<f64>().map(Some) })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("row {}: {e}", i + 1))
        })
        .collect()
}

/// How the run ended, for the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted { time: f64, reason: String },
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    scenario: &'a str,
    controller: &'a str,
    status: &'a str,
    abort_time: Option<f64>,
    abort_reason: Option<&'a str>,
    samples: usize,
    final_time: f64,
    tail_start: f64,
    rms_x: f64,
    rms_y: f64,
    rms_z: f64,
    rms_position: f64,
    position_settling_time: Option<f64>,
    final_position_error: f64,
    horizontal_transient_peak: f64,
    horizontal_peak: f64,
    horizontal_final: f64,
    peak_accel_demand: f64,
    max_bound_violation: f64,
    clamp_events: usize,
    relaxed_steps: usize,
    fault_steps: usize,
    max_clf_margin: Option<f64>,
    pendulum_peak_offset: Option<f64>,
    pendulum_rms_error: Option<f64>,
    pendulum_sign_changes: Option<usize>,
    pendulum_settling_time: Option<f64>,
    pendulum_final_error: Option<f64>,
}

pub fn render_metrics(log: &SimLog, metrics: &Metrics, status: &RunStatus) -> String {
    let (status_name, abort_time, abort_reason) = match status {
        RunStatus::Completed => ("completed", None, None),
        RunStatus::Aborted { time, reason } => ("aborted", Some(*time), Some(reason.as_str())),
    };
    let p = metrics.pendulum.as_ref();
    let doc = MetricsDoc {
        scenario: &log.scenario,
        controller: log.controller.name(),
        status: status_name,
        abort_time,
        abort_reason,
        samples: metrics.samples,
        final_time: metrics.final_time,
        tail_start: metrics.tail_start,
        rms_x: metrics.rms_position.x,
        rms_y: metrics.rms_position.y,
        rms_z: metrics.rms_position.z,
        rms_position: metrics.rms_position_norm,
        position_settling_time: metrics.position_settling_time,
        final_position_error: metrics.final_position_error,
        horizontal_transient_peak: metrics.horizontal_transient_peak,
        horizontal_peak: metrics.horizontal_peak,
        horizontal_final: metrics.horizontal_final,
        peak_accel_demand: metrics.peak_accel_demand,
        max_bound_violation: metrics.max_bound_violation,
        clamp_events: metrics.clamp_events,
        relaxed_steps: metrics.relaxed_steps,
        fault_steps: metrics.fault_steps,
        max_clf_margin: metrics.max_clf_margin,
        pendulum_peak_offset: p.map(|p| p.peak_offset),
        pendulum_rms_error: p.map(|p| p.rms_error),
        pendulum_sign_changes: p.map(|p| p.sign_changes),
        pendulum_settling_time: p.and_then(|p| p.settling_time),
        pendulum_final_error: p.map(|p| p.final_error),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("metrics serialize");
    text.push('\n');
    text
}

/// Flat metrics object as written to disk.
pub fn parse_metrics(text: &str) -> serde_json::Result<serde_json::Map<String, Value>> {
    serde_json::from_str(text)
}

/// Paths written for one scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Written {
    pub series: PathBuf,
    pub metrics: PathBuf,
}

pub fn write_outputs(
    dir: &Path,
    log: &SimLog,
    metrics_text: &str,
    format: Format,
) -> std::io::Result<Written> {
    fs::create_dir_all(dir)?;
    let (ext, body) = match format {
        Format::Csv => ("csv", render_csv(log)),
        Format::Json => ("json", render_json(log)),
    };
    let series = dir.join(format!("{}.{ext}", log.scenario));
    let metrics = dir.join(format!("{}.metrics.json", log.scenario));
    fs::write(&series, body)?;
    fs::write(&metrics, metrics_text)?;
    Ok(Written { series, metrics })
}
