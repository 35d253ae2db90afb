use nalgebra::{Matrix3, Matrix4, SVector, Vector4};

use super::gains::{OutputClf, TrackingGains};
use super::ControllerError;
use crate::models::{euler_rate_matrix, euler_rate_matrix_dot, ControlCommand, Mixer, QuadState, VehicleParams, Wrench};

/// Smallest admissible `|cos(phi) cos(theta)|` before the decoupling matrix
/// is treated as singular.
pub const DECOUPLING_MARGIN: f64 = 1e-6;

/// Desired output `[p_Z, phi, theta, psi]` and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputReference {
    pub value: Vector4<f64>,
    pub rate: Vector4<f64>,
    pub accel: Vector4<f64>,
}

impl OutputReference {
    pub fn set_point(value: Vector4<f64>) -> Self {
        Self { value, rate: Vector4::zeros(), accel: Vector4::zeros() }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        for (name, v) in [("value", &self.value), ("rate", &self.rate), ("accel", &self.accel)] {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(ControllerError::BadReference(name));
            }
        }
        if self.value[2].abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(ControllerError::BadReference("theta"));
        }
        Ok(())
    }
}

/// Output dynamics `y_ddot = drift + decoupling * [f_z, tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FblTerms {
    /// `L_f h`.
    pub drift: Vector4<f64>,
    /// `A(x)`, acting on the body wrench.
    pub decoupling: Matrix4<f64>,
    decoupling_inv: Matrix4<f64>,
}

impl FblTerms {
    /// Wrench that makes the output acceleration equal `v`.
    pub fn wrench_for(&self, v: &Vector4<f64>) -> Wrench {
        Wrench::from_vector(&(self.decoupling_inv * (v - self.drift)))
    }

    pub fn output_accel(&self, wrench: &Wrench) -> Vector4<f64> {
        self.drift + self.decoupling * wrench.to_vector()
    }

    pub fn decoupling_inverse(&self) -> &Matrix4<f64> {
        &self.decoupling_inv
    }
}

pub fn fbl_terms(state: &QuadState, params: &VehicleParams) -> Result<FblTerms, ControllerError> {
    let q = &state.attitude;
    let cos_product = q.x.cos() * q.y.cos();
    if cos_product.abs() < DECOUPLING_MARGIN {
        return Err(ControllerError::DecouplingSingularity { cos_product });
    }
    let z = euler_rate_matrix(q)?;
    let w = &state.body_rates;
    let q_dot = z * w;
    let z_dot = euler_rate_matrix_dot(q, &q_dot)?;
    let inertia = &params.inertia;
    let inv_inertia = Matrix3::from_diagonal(&inertia.map(|i| 1.0 / i));
    let gyro = inertia.component_mul(w).cross(w);
    let angular = z_dot * w + z * inv_inertia * gyro;

    let mut drift = Vector4::zeros();
    drift[0] = params.gravity;
    drift.fixed_rows_mut::<3>(1).copy_from(&angular);

    let mut decoupling = Matrix4::zeros();
    decoupling[(0, 0)] = -cos_product / params.mass;
    let zi = z * inv_inertia;
    decoupling.fixed_view_mut::<3, 3>(1, 1).copy_from(&zi);

    // block inverse; Z is invertible on the chart
    let z_inv = z.try_inverse().ok_or(ControllerError::DecouplingSingularity { cos_product })?;
    let mut decoupling_inv = Matrix4::zeros();
    decoupling_inv[(0, 0)] = -params.mass / cos_product;
    decoupling_inv.fixed_view_mut::<3, 3>(1, 1).copy_from(&(Matrix3::from_diagonal(inertia) * z_inv));

    Ok(FblTerms { drift, decoupling, decoupling_inv })
}

/// Current output `y` and its rate `y_dot = [v_Z, Z(q) omega]`.
pub fn output_state(state: &QuadState) -> Result<(Vector4<f64>, Vector4<f64>), ControllerError> {
    let z = euler_rate_matrix(&state.attitude)?;
    let q_dot = z * state.body_rates;
    let y = Vector4::new(state.position.z, state.attitude.x, state.attitude.y, state.attitude.z);
    let y_dot = Vector4::new(state.velocity.z, q_dot.x, q_dot.y, q_dot.z);
    Ok((y, y_dot))
}

/// `eta = [y - y_d; y_dot - y_d_dot]`.
pub fn output_error(state: &QuadState, reference: &OutputReference) -> Result<SVector<f64, 8>, ControllerError> {
    let (y, y_dot) = output_state(state)?;
    let mut eta = SVector::<f64, 8>::zeros();
    eta.fixed_rows_mut::<4>(0).copy_from(&(y - reference.value));
    eta.fixed_rows_mut::<4>(4).copy_from(&(y_dot - reference.rate));
    Ok(eta)
}

/// Set-point regulation with the Riccati feedback `v = -G^T P eta`.
pub fn fbl_regulator(
    state: &QuadState,
    set_point: &Vector4<f64>,
    params: &VehicleParams,
    mixer: &Mixer,
    clf: &OutputClf,
) -> Result<ControlCommand, ControllerError> {
    let terms = fbl_terms(state, params)?;
    let eta = output_error(state, &OutputReference::set_point(*set_point))?;
    let v = -(clf.gain * eta);
    Ok(ControlCommand::from_wrench(&terms.wrench_for(&v), mixer))
}

/// Trajectory tracking `v = y_d_ddot - alpha_2 e_dot - alpha_1 e`.
pub fn fbl_tracker(
    state: &QuadState,
    reference: &OutputReference,
    params: &VehicleParams,
    mixer: &Mixer,
    gains: &TrackingGains,
) -> Result<ControlCommand, ControllerError> {
    let terms = fbl_terms(state, params)?;
    let eta = output_error(state, reference)?;
    let e = eta.fixed_rows::<4>(0);
    let e_dot = eta.fixed_rows::<4>(4);
    let v = reference.accel - gains.alpha2.component_mul(&e_dot) - gains.alpha1.component_mul(&e);
    Ok(ControlCommand::from_wrench(&terms.wrench_for(&v), mixer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::gains::OutputClf;
    use crate::models::quad_derivative;
    use crate::numerics::rk4_step;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn setup() -> (VehicleParams, Mixer) {
        let p = VehicleParams::default();
        let m = Mixer::new(&p).unwrap();
        (p, m)
    }

    #[test]
    fn hover_terms() {
        let (p, _) = setup();
        let t = fbl_terms(&QuadState::at_rest(Vector3::zeros()), &p).unwrap();
        assert_eq!(t.drift, Vector4::new(p.gravity, 0.0, 0.0, 0.0));
        let expected = Matrix4::from_diagonal(&Vector4::new(-1.0 / p.mass, 100.0, 100.0, 50.0));
        assert_relative_eq!(t.decoupling, expected, epsilon = 1e-12);
    }

    #[test]
    fn spinning_body_drift_matches_dynamics() {
        let p = VehicleParams { inertia: Vector3::new(1.0, 2.0, 3.0), ..VehicleParams::default() };
        let s = QuadState { body_rates: Vector3::new(1.0, 2.0, 3.0), ..QuadState::at_rest(Vector3::zeros()) };
        let t = fbl_terms(&s, &p).unwrap();
        // at q = 0 the Euler rates equal the body rates, so Z_dot carries
        // the products of rates; hand expansion gives these rows
        let w = s.body_rates;
        let q_dot = w;
        let z_dot = euler_rate_matrix_dot(&Vector3::zeros(), &q_dot).unwrap();
        let omega_dot = Vector3::new((2.0 - 3.0) * 6.0 / 1.0, (3.0 - 1.0) * 3.0 / 2.0, (1.0 - 2.0) * 2.0 / 3.0);
        let expected = z_dot * w + omega_dot;
        assert_relative_eq!(t.drift.fixed_rows::<3>(1).into_owned(), expected, epsilon = 1e-12);
        assert_eq!(omega_dot.x, -6.0);
    }

    #[test]
    fn decoupling_singularity_is_reported() {
        let (p, _) = setup();
        let s = QuadState {
            attitude: Vector3::new(std::f64::consts::FRAC_PI_2, 0.1, 0.0),
            ..QuadState::at_rest(Vector3::zeros())
        };
        assert!(matches!(fbl_terms(&s, &p), Err(ControllerError::DecouplingSingularity { .. })));
    }

    #[test]
    fn output_acceleration_matches_finite_difference() {
        let (p, mixer) = setup();
        let s0 = QuadState {
            velocity: Vector3::new(0.1, -0.2, 0.3),
            attitude: Vector3::new(0.2, -0.15, 0.4),
            body_rates: Vector3::new(0.5, -0.3, 0.8),
            ..QuadState::at_rest(Vector3::zeros())
        };
        let cmd = ControlCommand::from_rotor(nalgebra::Vector4::new(12000.0, 12600.0, 12300.0, 12800.0), &mixer);
        let dt = 1e-4;
        let mut f = |_t: f64, x: &crate::models::QuadVector| quad_derivative(&QuadState::from_vector(x), cmd.wrench(), &p);
        let x0 = s0.to_vector();
        let x1 = rk4_step(&mut f, 0.0, &x0, dt).unwrap();
        let x2 = rk4_step(&mut f, dt, &x1, dt).unwrap();
        let predicted = fbl_terms(&QuadState::from_vector(&x1), &p).unwrap().output_accel(cmd.wrench());
        let y = |x: &crate::models::QuadVector| Vector4::new(x[2], x[6], x[7], x[8]);
        let fd = (y(&x2) - 2.0 * y(&x1) + y(&x0)) / (dt * dt);
        for i in 0..4 {
            let rel = (fd[i] - predicted[i]).abs() / predicted[i].abs().max(1e-3);
            assert!(rel < 1e-3, "channel {i}: fd {} vs {}", fd[i], predicted[i]);
        }
    }

    #[test]
    fn regulator_at_set_point_is_gravity_compensation() {
        let (p, mixer) = setup();
        let clf = OutputClf::design(&nalgebra::SVector::repeat(1.0)).unwrap();
        let s = QuadState::at_rest(Vector3::new(0.0, 0.0, -1.0));
        let cmd = fbl_regulator(&s, &Vector4::new(-1.0, 0.0, 0.0, 0.0), &p, &mixer, &clf).unwrap();
        assert_relative_eq!(cmd.wrench().thrust, p.mass * p.gravity, epsilon = 1e-9);
        assert!(cmd.wrench().torque.norm() < 1e-12);
        let tracked = fbl_tracker(
            &s,
            &OutputReference::set_point(Vector4::new(-1.0, 0.0, 0.0, 0.0)),
            &p,
            &mixer,
            &TrackingGains::default(),
        )
        .unwrap();
        assert_relative_eq!(tracked.rotor(), cmd.rotor(), epsilon = 1e-9);
    }
}
