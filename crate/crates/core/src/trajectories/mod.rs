//! Reference generators for the flight experiments and the finite-difference
//! pipeline that turns a stream of attitude set-points into rates and
//! accelerations.

mod differentiator;

pub use differentiator::{Derivatives, SetpointDifferentiator};

use nalgebra::Vector3;
use std::f64::consts::PI;

/// Value of a reference signal and its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub time: f64,
    pub value: Vector3<f64>,
    pub rate: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl ReferenceSample {
    pub fn constant(time: f64, value: Vector3<f64>) -> Self {
        Self { time, value, rate: Vector3::zeros(), accel: Vector3::zeros() }
    }
}

/// Declarative description of a reference trajectory.
///
/// Position trajectories live in the Z-down world frame, so a height `h`
/// above the start corresponds to `p_Z = -h`. The pendulum circle lives in
/// the `(a, b)` offset plane and leaves the third channel at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectorySpec {
    SetPoint { point: Vector3<f64> },
    /// `(R cos kt, R sin kt, z)`.
    Circle { radius: f64, rate: f64, z: f64 },
    /// Vertical climb at `(R, 0)` to `altitude` over `climb_time`, then the
    /// circle. With `blend_window > 0` the angular rate ramps up along a
    /// quintic smooth step so the whole reference is C2; with zero the
    /// circle starts abruptly and the velocity jumps.
    TakeoffThenCircle { radius: f64, rate: f64, altitude: f64, climb_time: f64, blend_window: f64 },
    /// `(R cos kt, R sin kt, 0)` for the pendulum offsets.
    PendulumCircle { radius: f64, rate: f64 },
}

impl TrajectorySpec {
    pub fn pendulum_circle_hz(radius: f64, frequency_hz: f64) -> Self {
        Self::PendulumCircle { radius, rate: 2.0 * PI * frequency_hz }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| if v.is_finite() { Ok(()) } else { Err(format!("{name} must be finite")) };
        match *self {
            Self::SetPoint { point } => {
                if point.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err("set-point must be finite".into())
                }
            }
            Self::Circle { radius, rate, z } => {
                check_radius(radius)?;
                finite("rate", rate)?;
                finite("z", z)
            }
            Self::TakeoffThenCircle { radius, rate, altitude, climb_time, blend_window } => {
                check_radius(radius)?;
                finite("rate", rate)?;
                finite("altitude", altitude)?;
                if !(climb_time.is_finite() && climb_time > 0.0) {
                    return Err(format!("climb_time must be positive, got {climb_time}"));
                }
                if !(blend_window.is_finite() && blend_window >= 0.0) {
                    return Err(format!("blend_window must be non-negative, got {blend_window}"));
                }
                Ok(())
            }
            Self::PendulumCircle { radius, rate } => {
                check_radius(radius)?;
                finite("rate", rate)
            }
        }
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        sample_trajectory(self, t)
    }
}

fn check_radius(radius: f64) -> Result<(), String> {
    if radius.is_finite() && radius >= 0.0 {
        Ok(())
    } else {
        Err(format!("radius must be non-negative, got {radius}"))
    }
}

/// Quintic smooth step on `[0, 1]` and its first two derivatives.
fn smooth_step(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let s2 = s * s;
    let s3 = s2 * s;
    (
        s3 * (10.0 - 15.0 * s + 6.0 * s2),
        30.0 * s2 * (1.0 - s) * (1.0 - s),
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
    )
}

/// Point on a circle of radius `r` at phase `angle`, given the phase rate and
/// acceleration.
fn circle_point(r: f64, angle: f64, rate: f64, accel: f64) -> [Vector3<f64>; 3] {
    let (s, c) = angle.sin_cos();
    [
        Vector3::new(r * c, r * s, 0.0),
        Vector3::new(-r * s * rate, r * c * rate, 0.0),
        Vector3::new(-r * c * rate * rate - r * s * accel, -r * s * rate * rate + r * c * accel, 0.0),
    ]
}

pub fn sample_trajectory(spec: &TrajectorySpec, t: f64) -> ReferenceSample {
    match *spec {
        TrajectorySpec::SetPoint { point } => ReferenceSample::constant(t, point),
        TrajectorySpec::Circle { radius, rate, z } => {
            let [mut value, rate_v, accel] = circle_point(radius, rate * t, rate, 0.0);
            value.z = z;
            ReferenceSample { time: t, value, rate: rate_v, accel }
        }
        TrajectorySpec::PendulumCircle { radius, rate } => {
            let [value, rate_v, accel] = circle_point(radius, rate * t, rate, 0.0);
            ReferenceSample { time: t, value, rate: rate_v, accel }
        }
        TrajectorySpec::TakeoffThenCircle { radius, rate, altitude, climb_time, blend_window } => {
            let (s, ds, dds) = smooth_step(t / climb_time);
            let z = -altitude * s;
            let z_rate = -altitude * ds / climb_time;
            let z_accel = -altitude * dds / (climb_time * climb_time);

            let tau = t - climb_time;
            let (angle, angle_rate, angle_accel) = if tau <= 0.0 {
                (0.0, 0.0, 0.0)
            } else if blend_window == 0.0 {
                (rate * tau, rate, 0.0)
            } else if tau < blend_window {
                // integral of the smooth step: W (5/2 s^4 - 3 s^5 + s^6)
                let u = tau / blend_window;
                let (step, dstep, _) = smooth_step(u);
                let integral = blend_window * u.powi(4) * (2.5 - 3.0 * u + u * u);
                (rate * integral, rate * step, rate * dstep / blend_window)
            } else {
                (rate * (0.5 * blend_window + tau - blend_window), rate, 0.0)
            };
            let [mut value, mut rate_v, mut accel] = circle_point(radius, angle, angle_rate, angle_accel);
            value.z = z;
            rate_v.z = z_rate;
            accel.z = z_accel;
            ReferenceSample { time: t, value, rate: rate_v, accel }
        }
    }
}
