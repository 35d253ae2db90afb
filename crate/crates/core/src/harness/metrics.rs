use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use super::scenario::MetricsSpec;
use super::sim::{EventKind, SimLog};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("log is empty")]
    EmptyLog,
    #[error("window [{start}, {end}] contains no samples")]
    EmptyWindow { start: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumMetrics {
    /// Largest `|(a, b)|` over the run.
    pub peak_offset: f64,
    /// Tail RMS of `|(a, b) - (a_d, b_d)|`.
    pub rms_error: f64,
    /// Sign changes of `a - a_d` after its peak, with a hysteresis band.
    pub sign_changes: usize,
    pub settling_time: Option<f64>,
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    pub final_time: f64,
    pub tail_start: f64,
    /// Tail RMS of the position error per world axis.
    pub rms_position: Vector3<f64>,
    /// Tail RMS of the position error norm.
    pub rms_position_norm: f64,
    pub position_settling_time: Option<f64>,
    pub final_position_error: f64,
    /// Largest horizontal distance from the origin within the transient window.
    pub horizontal_transient_peak: f64,
    pub horizontal_peak: f64,
    pub horizontal_final: f64,
    /// Largest translational acceleration requested by the outer loop.
    pub peak_accel_demand: f64,
    /// Largest rotor bound excursion of the applied commands.
    pub max_bound_violation: f64,
    pub clamp_events: usize,
    pub relaxed_steps: usize,
    pub fault_steps: usize,
    /// Largest `V_dot + c3 V` over the run (CLF-QP only).
    pub max_clf_margin: Option<f64>,
    pub pendulum: Option<PendulumMetrics>,
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// First time after which `|error|` stays within `band * |error[0]|`.
/// `None` if the final sample is still outside the band.
pub fn settling_time(times: &[f64], error: &[f64], band: f64) -> Option<f64> {
    let first = error.first()?.abs();
    let threshold = band * first;
    match error.iter().rposition(|e| e.abs() > threshold) {
        None => Some(times[0]),
        Some(last) if last + 1 < times.len() => Some(times[last + 1]),
        Some(_) => None,
    }
}

/// Sign changes of `signal` after its largest excursion. A change is only
/// counted once the signal has crossed to the far side of a band of
/// `band * |peak|` around zero, so settling jitter does not count.
pub fn sign_changes_after_peak(signal: &[f64], band: f64) -> usize {
    let Some((peak_idx, peak)) = signal
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.abs()))
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
    else {
        return 0;
    };
    if peak == 0.0 {
        return 0;
    }
    let threshold = band * peak;
    let mut side = signal[peak_idx].signum();
    let mut changes = 0;
    for &v in &signal[peak_idx..] {
        if v * side < -threshold {
            side = -side;
            changes += 1;
        }
    }
    changes
}

pub fn compute_metrics(log: &SimLog, spec: &MetricsSpec) -> Result<Metrics, MetricsError> {
    let records = &log.records;
    let last = records.last().ok_or(MetricsError::EmptyLog)?;
    let final_time = last.time;
    let tail_start = spec.tail_fraction * final_time;
    let tail: Vec<_> = records.iter().filter(|r| r.time >= tail_start).collect();
    if tail.is_empty() {
        return Err(MetricsError::EmptyWindow { start: tail_start, end: final_time });
    }

    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let pos_err: Vec<Vector3<f64>> = records.iter().map(|r| r.quad.position - r.reference).collect();
    let tail_err: Vec<&Vector3<f64>> = records
        .iter()
        .zip(&pos_err)
        .filter(|(r, _)| r.time >= tail_start)
        .map(|(_, e)| e)
        .collect();
    let axis = |i: usize| rms(&tail_err.iter().map(|e| e[i]).collect::<Vec<_>>());
    let rms_position = Vector3::new(axis(0), axis(1), axis(2));
    let rms_position_norm = rms(&tail_err.iter().map(|e| e.norm()).collect::<Vec<_>>());
    let err_norm: Vec<f64> = pos_err.iter().map(|e| e.norm()).collect();
    let position_settling_time = settling_time(&times, &err_norm, spec.settle_band);

    let horizontal: Vec<f64> = records.iter().map(|r| r.quad.position.xy().norm()).collect();
    let horizontal_transient_peak = records
        .iter()
        .zip(&horizontal)
        .filter(|(r, _)| r.time <= spec.transient_window)
        .map(|(_, h)| *h)
        .fold(0.0, f64::max);

    let u_min = &log.vehicle.u_min;
    let u_max = &log.vehicle.u_max;
    let clf_margins: Vec<f64> = records.iter().filter_map(|r| r.clf.map(|c| c.decrease_margin)).collect();

    let pendulum = if records.iter().all(|r| r.pendulum.is_some()) && log.pendulum_half_length.is_some() {
        let offset_err: Vec<Vector2<f64>> = records
            .iter()
            .map(|r| r.pendulum.expect("checked").offset() - r.pendulum_reference.unwrap_or_default())
            .collect();
        let norms: Vec<f64> = offset_err.iter().map(|e| e.norm()).collect();
        let tail_norms: Vec<f64> =
            records.iter().zip(&norms).filter(|(r, _)| r.time >= tail_start).map(|(_, n)| *n).collect();
        let a_err: Vec<f64> = offset_err.iter().map(|e| e.x).collect();
        Some(PendulumMetrics {
            peak_offset: records.iter().map(|r| r.pendulum.expect("checked").offset().norm()).fold(0.0, f64::max),
            rms_error: rms(&tail_norms),
            sign_changes: sign_changes_after_peak(&a_err, spec.settle_band),
            settling_time: settling_time(&times, &norms, spec.settle_band),
            final_error: *norms.last().expect("non-empty"),
        })
    } else {
        None
    };

    Ok(Metrics {
        samples: records.len(),
        final_time,
        tail_start,
        rms_position,
        rms_position_norm,
        position_settling_time,
        final_position_error: *err_norm.last().expect("non-empty"),
        horizontal_transient_peak,
        horizontal_peak: horizontal.iter().copied().fold(0.0, f64::max),
        horizontal_final: *horizontal.last().expect("non-empty"),
        peak_accel_demand: records.iter().map(|r| r.setpoint.accel_demand.norm()).fold(0.0, f64::max),
        max_bound_violation: records.iter().map(|r| r.command.bound_violation(u_min, u_max)).fold(0.0, f64::max),
        clamp_events: log.events.iter().filter(|e| matches!(e.kind, EventKind::Clamp { .. })).count(),
        relaxed_steps: log.events.iter().filter(|e| matches!(e.kind, EventKind::QpRelaxed { .. })).count(),
        fault_steps: log.events.iter().filter(|e| matches!(e.kind, EventKind::Fault { .. })).count(),
        max_clf_margin: clf_margins.iter().copied().reduce(f64::max),
        pendulum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_has_zero_rms_and_settles_immediately() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let zeros = vec![0.0; 100];
        assert_eq!(rms(&zeros), 0.0);
        assert_eq!(settling_time(&times, &zeros, 0.02), Some(0.0));
    }

    #[test]
    fn exponential_settles_at_ln_fifty() {
        let dt = 1e-3;
        let times: Vec<f64> = (0..=10_000).map(|i| i as f64 * dt).collect();
        let e: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let ts = settling_time(&times, &e, 0.02).unwrap();
        assert!((ts - 50f64.ln()).abs() <= dt, "{ts}");
    }

    #[test]
    fn unsettled_signal_reports_none() {
        let times = [0.0, 1.0, 2.0];
        assert_eq!(settling_time(&times, &[1.0, 0.5, 0.9], 0.02), None);
    }

    #[test]
    fn critically_damped_response_has_no_sign_change() {
        let a: Vec<f64> = (0..5000).map(|i| i as f64 * 1e-3).map(|t| (1.0 + 5.0 * t) * (-5.0 * t).exp()).collect();
        assert_eq!(sign_changes_after_peak(&a, 0.02), 0);
    }

    #[test]
    fn damped_oscillation_changes_sign() {
        let a: Vec<f64> = (0..10_000).map(|i| i as f64 * 1e-3).map(|t| (-0.5 * t).exp() * (3.0 * t).cos()).collect();
        assert!(sign_changes_after_peak(&a, 0.02) >= 3);
    }

    #[test]
    fn rms_of_constant() {
        assert!((rms(&[3.0, -3.0, 3.0]) - 3.0).abs() < 1e-15);
    }
}
