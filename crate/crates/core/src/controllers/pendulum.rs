use nalgebra::{Matrix2, SMatrix, SVector, Vector2, Vector3};

use super::allocation::AttitudeSetpoint;
use super::gains::{PendulumLqr, TrackingGains};
use super::ControllerError;
use crate::models::{pendulum_drift, pendulum_input_matrix, PendulumParams, PendulumState, QuadState};

/// Desired pendulum offsets `(a_d, b_d)` with derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PendulumReference {
    pub value: Vector2<f64>,
    pub rate: Vector2<f64>,
    pub accel: Vector2<f64>,
}

/// `nu = y_pd_ddot - K_1 (y_p_dot - y_pd_dot) - K_2 (y_p - y_pd)`.
pub fn pendulum_virtual_input(
    state: &PendulumState,
    reference: &PendulumReference,
    gains: &TrackingGains,
) -> Vector2<f64> {
    reference.accel
        - gains.k1.component_mul(&(state.rate() - reference.rate))
        - gains.k2.component_mul(&(state.offset() - reference.value))
}

/// Minimum-norm vehicle acceleration `xi = B_p^+ (nu - f_p)`.
pub fn pendulum_fbl_xi(
    state: &PendulumState,
    reference: &PendulumReference,
    params: &PendulumParams,
    gains: &TrackingGains,
    gravity: f64,
) -> Result<Vector3<f64>, ControllerError> {
    let drift = pendulum_drift(state, params.half_length, gravity)?;
    let bp = pendulum_input_matrix(state.a, state.b, params.half_length)?;
    let nu = pendulum_virtual_input(state, reference, gains);
    let gram = bp * bp.transpose();
    let det = gram.determinant();
    let gram_inv = gram.try_inverse().ok_or(ControllerError::PendulumSingular { det })?;
    Ok(bp.transpose() * (gram_inv * (nu - drift)))
}

/// Planar vehicle acceleration `xi' = B'_p^{-1} (nu - f_p - b_z p_Z_ddot)`
/// for a vertical acceleration fixed elsewhere.
pub fn pendulum_fbl_xi_prime(
    state: &PendulumState,
    accel_z: f64,
    reference: &PendulumReference,
    params: &PendulumParams,
    gains: &TrackingGains,
    gravity: f64,
) -> Result<Vector2<f64>, ControllerError> {
    let drift = pendulum_drift(state, params.half_length, gravity)?;
    let bp = pendulum_input_matrix(state.a, state.b, params.half_length)?;
    let nu = pendulum_virtual_input(state, reference, gains);
    let planar: Matrix2<f64> = bp.fixed_view::<2, 2>(0, 0).into_owned();
    let det = planar.determinant();
    if det.abs() < 1e-9 {
        return Err(ControllerError::PendulumSingular { det });
    }
    let folded = drift + bp.column(2) * accel_z;
    let inv = planar.try_inverse().ok_or(ControllerError::PendulumSingular { det })?;
    Ok(inv * (nu - folded))
}

/// Hover linearization of the pendulum and horizontal position, state
/// `[a, b, p_X, p_Y, a_dot, b_dot, v_X, v_Y]`, input `[phi, theta]`.
pub fn linearized_pendulum_model(params: &PendulumParams, gravity: f64) -> (SMatrix<f64, 8, 8>, SMatrix<f64, 8, 2>) {
    let l = params.half_length;
    let g = gravity;
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    for i in 0..4 {
        a[(i, i + 4)] = 1.0;
    }
    a[(4, 0)] = 3.0 * g / (4.0 * l);
    a[(5, 1)] = 3.0 * g / (4.0 * l);
    let mut b = SMatrix::<f64, 8, 2>::zeros();
    b[(4, 1)] = 0.75 * g;
    b[(5, 0)] = -0.75 * g;
    b[(6, 1)] = -g;
    b[(7, 0)] = g;
    (a, b)
}

/// `eta_p = [a, b, p_X, p_Y, a_dot, b_dot, v_X, v_Y]`.
pub(crate) fn pendulum_position_state(pendulum: &PendulumState, quad: &QuadState) -> SVector<f64, 8> {
    SVector::<f64, 8>::from_column_slice(&[
        pendulum.a,
        pendulum.b,
        quad.position.x,
        quad.position.y,
        pendulum.a_dot,
        pendulum.b_dot,
        quad.velocity.x,
        quad.velocity.y,
    ])
}

/// Reference for the linearized model that reproduces a horizontal
/// acceleration profile, together with the matching input.
///
/// With `p_ddot` and its rate `p_dddot` known, the attitude that produces the
/// acceleration is `(phi, theta) = (p_Y_ddot / g, -p_X_ddot / g)` and the
/// pendulum leans into it quasi-statically, `(a, b) = L p_ddot / g`, on top
/// of any commanded pendulum offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrReference {
    pub state: SVector<f64, 8>,
    pub input: Vector2<f64>,
}

impl LqrReference {
    /// Pure state reference with no feedforward.
    pub fn from_state(state: SVector<f64, 8>) -> Self {
        Self { state, input: Vector2::zeros() }
    }

    pub fn with_feedforward(
        position: &Vector3<f64>,
        velocity: &Vector3<f64>,
        accel: &Vector3<f64>,
        jerk: &Vector3<f64>,
        pendulum: &PendulumReference,
        params: &PendulumParams,
        gravity: f64,
    ) -> Self {
        let lean = params.half_length / gravity;
        let state = SVector::<f64, 8>::from_column_slice(&[
            pendulum.value.x + lean * accel.x,
            pendulum.value.y + lean * accel.y,
            position.x,
            position.y,
            pendulum.rate.x + lean * jerk.x,
            pendulum.rate.y + lean * jerk.y,
            velocity.x,
            velocity.y,
        ]);
        Self { state, input: Vector2::new(accel.y / gravity, -accel.x / gravity) }
    }
}

/// Roll and pitch set-points from full-state feedback on the linearized
/// model, `u_ref - K (eta_p - eta_ref)`, saturated at the design's attitude
/// limit.
pub fn pendulum_position_lqr(
    pendulum: &PendulumState,
    quad: &QuadState,
    reference: &LqrReference,
    lqr: &PendulumLqr,
    mass: f64,
    gravity: f64,
) -> AttitudeSetpoint {
    let eta = pendulum_position_state(pendulum, quad);
    let u = reference.input - lqr.gain * (eta - reference.state);
    let limit = lqr.attitude_limit;
    let phi = u[0].clamp(-limit, limit);
    let theta = u[1].clamp(-limit, limit);
    let accel_demand = Vector3::new(-gravity * theta, gravity * phi, 0.0);
    AttitudeSetpoint::new(Vector3::new(phi, theta, 0.0), mass * gravity, accel_demand)
}
