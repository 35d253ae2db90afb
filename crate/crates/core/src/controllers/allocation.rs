use nalgebra::Vector3;

use super::gains::TrackingGains;
use super::ControllerError;
use crate::models::{QuadState, VehicleParams};

/// Desired position with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionReference {
    pub value: Vector3<f64>,
    pub rate: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// Attitude set-point produced by an outer loop. `rate` and `accel` are zero
/// until filled in by a differentiator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSetpoint {
    /// `(phi_d, theta_d, psi_d)`.
    pub attitude: Vector3<f64>,
    pub rate: Vector3<f64>,
    pub accel: Vector3<f64>,
    /// Commanded collective thrust `m |f_d|` (N).
    pub thrust: f64,
    /// Translational acceleration the outer loop asked for.
    pub accel_demand: Vector3<f64>,
}

impl AttitudeSetpoint {
    pub fn new(attitude: Vector3<f64>, thrust: f64, accel_demand: Vector3<f64>) -> Self {
        Self { attitude, rate: Vector3::zeros(), accel: Vector3::zeros(), thrust, accel_demand }
    }
}

/// Roll and pitch that align the thrust axis with `force` at yaw `psi`.
///
/// `force` is the required specific thrust `p_ddot - g e_Z`, which points
/// up (negative Z) whenever the vehicle is not in free fall. The pitch uses
/// the two-argument arctangent so that `-R(q_d) e_z` is parallel to `force`.
pub fn attitude_from_force(force: &Vector3<f64>, psi: f64) -> Result<Vector3<f64>, ControllerError> {
    let norm = force.norm();
    if !(norm > 1e-6) {
        return Err(ControllerError::DegenerateThrust { norm });
    }
    if !(-force.z > 0.0) {
        return Err(ControllerError::InvertedThrust { f_z: force.z });
    }
    let (spsi, cpsi) = psi.sin_cos();
    let lateral = ((-force.x * spsi + force.y * cpsi) / norm).clamp(-1.0, 1.0);
    let phi = lateral.asin();
    let theta = (-(force.x * cpsi + force.y * spsi)).atan2(-force.z);
    Ok(Vector3::new(phi, theta, psi))
}

/// PD position loop followed by thrust-direction allocation at zero yaw.
pub fn position_allocation(
    state: &QuadState,
    reference: &PositionReference,
    params: &VehicleParams,
    gains: &TrackingGains,
) -> Result<AttitudeSetpoint, ControllerError> {
    let e = reference.value - state.position;
    let e_dot = reference.rate - state.velocity;
    let accel = reference.accel + gains.kd.component_mul(&e_dot) + gains.kp.component_mul(&e);
    let force = accel - Vector3::new(0.0, 0.0, params.gravity);
    let attitude = attitude_from_force(&force, 0.0)?;
    Ok(AttitudeSetpoint::new(attitude, params.mass * force.norm(), accel))
}
