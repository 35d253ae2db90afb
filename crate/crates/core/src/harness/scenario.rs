use nalgebra::Vector3;
use std::fmt;
use std::str::FromStr;

use crate::controllers::TrackingGains;
use crate::models::{check_pendulum_margin, Mixer, PendulumParams, PendulumState, QuadState, VehicleParams};
use crate::trajectories::TrajectorySpec;

/// Which controller closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Position allocation over the Riccati output regulator.
    FblRegulator,
    /// Position allocation over the feedback-linearizing tracker.
    FblTracker,
    /// Position allocation over the CLF-QP.
    ClfQp,
    /// Pendulum feedback linearization with the minimum-norm acceleration.
    PendXi,
    /// Pendulum feedback linearization with the vertical channel held by the
    /// altitude loop.
    PendXiPrime,
    /// Linearized pendulum-plus-position LQR.
    PendLqr,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        Self::FblRegulator,
        Self::FblTracker,
        Self::ClfQp,
        Self::PendXi,
        Self::PendXiPrime,
        Self::PendLqr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FblRegulator => "fbl-regulator",
            Self::FblTracker => "fbl-tracker",
            Self::ClfQp => "clf-qp",
            Self::PendXi => "pend-xi",
            Self::PendXiPrime => "pend-xi-prime",
            Self::PendLqr => "pend-lqr",
        }
    }

    pub fn needs_pendulum(self) -> bool {
        matches!(self, Self::PendXi | Self::PendXiPrime | Self::PendLqr)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown controller `{s}`"))
    }
}

/// Additive zero-mean Gaussian process noise, held constant over each step.
///
/// The standard deviations are quoted at a 1 ms step and rescaled by
/// `sqrt(1e-3 / dt)` so that the noise intensity does not depend on `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Translational acceleration noise (m/s^2).
    pub accel_std: f64,
    /// Angular acceleration noise (rad/s^2).
    pub angular_std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const REFERENCE_STEP: f64 = 1e-3;

    pub fn off() -> Self {
        Self { accel_std: 0.0, angular_std: 0.0, seed: 0 }
    }

    /// Default intensities used for the noise comparison experiments.
    pub fn standard(seed: u64) -> Self {
        Self { accel_std: 0.05, angular_std: 0.1, seed }
    }

    pub fn is_off(&self) -> bool {
        self.accel_std == 0.0 && self.angular_std == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::off()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumSetup {
    pub params: PendulumParams,
    pub initial: PendulumState,
    /// Reference for `(a, b)`; only the first two channels are used.
    pub reference: TrajectorySpec,
}

impl Default for PendulumSetup {
    fn default() -> Self {
        Self {
            params: PendulumParams::default(),
            initial: PendulumState::default(),
            reference: TrajectorySpec::SetPoint { point: Vector3::zeros() },
        }
    }
}

/// Windows and bands used when summarizing a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSpec {
    /// Tail window starts at this fraction of the duration.
    pub tail_fraction: f64,
    /// Settling band as a fraction of the initial error (or of the peak for
    /// sign-change counting).
    pub settle_band: f64,
    /// Length of the initial window used for transient peaks (s).
    pub transient_window: f64,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self { tail_fraction: 0.5, settle_band: 0.02, transient_window: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub vehicle: VehicleParams,
    pub gains: TrackingGains,
    pub controller: ControllerKind,
    /// Position reference for the vehicle.
    pub trajectory: TrajectorySpec,
    pub pendulum: Option<PendulumSetup>,
    pub initial: QuadState,
    pub duration: f64,
    pub dt: f64,
    pub noise: NoiseSpec,
    pub metrics: MetricsSpec,
}

impl Scenario {
    /// Hover in place at the origin with the tracker.
    pub fn hover(name: &str) -> Self {
        Self {
            name: name.to_string(),
            description: String::new(),
            vehicle: VehicleParams::default(),
            gains: TrackingGains::default(),
            controller: ControllerKind::FblTracker,
            trajectory: TrajectorySpec::SetPoint { point: Vector3::zeros() },
            pendulum: None,
            initial: QuadState::at_rest(Vector3::zeros()),
            duration: 10.0,
            dt: 1e-3,
            noise: NoiseSpec::off(),
            metrics: MetricsSpec::default(),
        }
    }

    /// Number of integration steps; the log holds one more record.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("scenario name must not be empty".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if self.dt > self.duration {
            return Err(format!("dt {} exceeds duration {}", self.dt, self.duration));
        }
        let steps = self.duration / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(format!("duration {} is not a whole number of steps of {}", self.duration, self.dt));
        }
        self.vehicle.validate().map_err(|e| format!("vehicle: {e}"))?;
        Mixer::new(&self.vehicle).map_err(|e| format!("vehicle: {e}"))?;
        self.gains.validate().map_err(|e| format!("gains: {e}"))?;
        self.trajectory.validate().map_err(|e| format!("trajectory: {e}"))?;
        self.initial.validate().map_err(|e| format!("initial state: {e}"))?;
        for (name, v) in [("accel_std", self.noise.accel_std), ("angular_std", self.noise.angular_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("noise.{name} must be non-negative, got {v}"));
            }
        }
        let m = &self.metrics;
        if !(m.tail_fraction >= 0.0 && m.tail_fraction < 1.0) {
            return Err(format!("metrics.tail_fraction must lie in [0, 1), got {}", m.tail_fraction));
        }
        if !(m.settle_band > 0.0 && m.settle_band < 1.0) {
            return Err(format!("metrics.settle_band must lie in (0, 1), got {}", m.settle_band));
        }
        if !(m.transient_window.is_finite() && m.transient_window > 0.0) {
            return Err(format!("metrics.transient_window must be positive, got {}", m.transient_window));
        }
        match (&self.pendulum, self.controller.needs_pendulum()) {
            (None, true) => {
                return Err(format!("controller `{}` requires a pendulum section", self.controller));
            }
            (Some(p), _) => {
                p.params.validate().map_err(|e| format!("pendulum: {e}"))?;
                p.reference.validate().map_err(|e| format!("pendulum reference: {e}"))?;
                let s = &p.initial;
                if [s.a, s.b, s.a_dot, s.b_dot].iter().any(|v| !v.is_finite()) {
                    return Err("pendulum initial state must be finite".into());
                }
                check_pendulum_margin(s, p.params.half_length).map_err(|e| format!("pendulum initial state: {e}"))?;
            }
            (None, false) => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_names_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.name().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("pid".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn hover_scenario_is_valid() {
        let sc = Scenario::hover("hover");
        sc.validate().unwrap();
        assert_eq!(sc.steps(), 10_000);
    }

    #[test]
    fn pendulum_controller_without_pendulum_is_rejected() {
        let sc = Scenario { controller: ControllerKind::PendXi, ..Scenario::hover("p") };
        assert!(sc.validate().unwrap_err().contains("pendulum"));
    }

    #[test]
    fn fractional_step_count_is_rejected() {
        let sc = Scenario { duration: 1.0, dt: 0.3, ..Scenario::hover("h") };
        assert!(sc.validate().is_err());
    }
}
