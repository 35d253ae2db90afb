use nalgebra::{Matrix2x3, Vector2, Vector3};

use super::ModelError;

/// Fraction of the half-length beyond which the pendulum model is treated as
/// degenerate. `H` and `B_p` carry powers of `zeta`, which vanish at the
/// horizontal.
pub const PENDULUM_MARGIN: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Half-length `L`; the rod is `2L` long with its CoM at distance `L`.
    pub half_length: f64,
    /// Recorded for completeness; the vehicle does not feel the pendulum.
    pub mass: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { half_length: 0.5, mass: 0.05 }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.half_length.is_finite() && self.half_length > 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "pendulum half_length must be positive, got {}",
                self.half_length
            )));
        }
        if !(self.mass.is_finite() && self.mass >= 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "pendulum mass must be non-negative, got {}",
                self.mass
            )));
        }
        Ok(())
    }
}

/// Horizontal world-frame offsets of the pendulum CoM from the vehicle CoM and
/// their rates. The vertical offset `zeta` is derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PendulumState {
    pub a: f64,
    pub b: f64,
    pub a_dot: f64,
    pub b_dot: f64,
}

impl PendulumState {
    pub fn offset(&self) -> Vector2<f64> {
        Vector2::new(self.a, self.b)
    }

    pub fn rate(&self) -> Vector2<f64> {
        Vector2::new(self.a_dot, self.b_dot)
    }
}

pub fn pendulum_zeta(a: f64, b: f64, half_length: f64) -> Result<f64, ModelError> {
    let radius_sq = a * a + b * b;
    let limit_sq = half_length * half_length;
    if !(radius_sq < limit_sq) {
        return Err(ModelError::PendulumHorizontal { radius_sq, limit_sq });
    }
    Ok((limit_sq - radius_sq).sqrt())
}

/// Fails once the pendulum leaves the cone `a^2 + b^2 <= (margin L)^2`.
pub fn check_pendulum_margin(state: &PendulumState, half_length: f64) -> Result<(), ModelError> {
    let radius_sq = state.a * state.a + state.b * state.b;
    let limit_sq = (PENDULUM_MARGIN * half_length).powi(2);
    if !radius_sq.is_finite() || radius_sq > limit_sq {
        return Err(ModelError::PendulumHorizontal { radius_sq, limit_sq });
    }
    Ok(())
}

/// Drift term `f_p`, the pendulum acceleration with the vehicle unaccelerated.
pub fn pendulum_drift(state: &PendulumState, half_length: f64, gravity: f64) -> Result<Vector2<f64>, ModelError> {
    let PendulumState { a, b, a_dot, b_dot } = *state;
    let l = half_length;
    let l2 = l * l;
    let zeta = pendulum_zeta(a, b, l)?;
    let h = 4.0 * b_dot * b_dot * (a * a - l2) - 8.0 * a_dot * b_dot * a * b
        + 4.0 * a_dot * a_dot * (b * b - l2)
        + 3.0 * zeta.powi(3) * gravity;
    let denom = 4.0 * l2 * zeta * zeta;
    Ok(Vector2::new(a * h / denom, b * h / denom))
}

/// Input matrix `B_p` mapping vehicle acceleration to pendulum acceleration.
pub fn pendulum_input_matrix(a: f64, b: f64, half_length: f64) -> Result<Matrix2x3<f64>, ModelError> {
    let l2 = half_length * half_length;
    let zeta = pendulum_zeta(a, b, half_length)?;
    let s = 3.0 / (4.0 * l2);
    #[rustfmt::skip]
    let m = Matrix2x3::new(
        s * (a * a - l2), s * a * b,        s * a * zeta,
        s * a * b,        s * (b * b - l2), s * b * zeta,
    );
    Ok(m)
}

/// Pendulum accelerations `(a_ddot, b_ddot)` given the vehicle acceleration.
pub fn pendulum_derivative(
    state: &PendulumState,
    vehicle_accel: &Vector3<f64>,
    params: &PendulumParams,
    gravity: f64,
) -> Result<Vector2<f64>, ModelError> {
    let drift = pendulum_drift(state, params.half_length, gravity)?;
    let input = pendulum_input_matrix(state.a, state.b, params.half_length)?;
    Ok(drift + input * vehicle_accel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const G: f64 = 9.81;

    #[test]
    fn zeta_examples() {
        assert_eq!(pendulum_zeta(0.0, 0.0, 0.5).unwrap(), 0.5);
        assert!(matches!(pendulum_zeta(0.3, 0.4, 0.5), Err(ModelError::PendulumHorizontal { .. })));
        assert_relative_eq!(pendulum_zeta(0.1, 0.1, 0.5).unwrap(), 0.23f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(pendulum_zeta(0.1, 0.1, 0.5).unwrap(), 0.47958, epsilon = 1e-5);
    }

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let d = pendulum_derivative(&PendulumState::default(), &Vector3::zeros(), &PendulumParams::default(), G)
            .unwrap();
        assert_eq!(d, Vector2::zeros());
    }

    #[test]
    fn forward_acceleration_tips_pendulum_back() {
        let d = pendulum_derivative(
            &PendulumState::default(),
            &Vector3::new(1.0, 0.0, 0.0),
            &PendulumParams::default(),
            G,
        )
        .unwrap();
        assert_relative_eq!(d, Vector2::new(-0.75, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn margin_check() {
        let l = 0.5;
        let inside = PendulumState { a: 0.49, ..Default::default() };
        assert!(check_pendulum_margin(&inside, l).is_ok());
        let outside = PendulumState { a: 0.4996, ..Default::default() };
        assert!(check_pendulum_margin(&outside, l).is_err());
    }

    #[test]
    fn invalid_params() {
        assert!(PendulumParams { half_length: 0.0, mass: 0.1 }.validate().is_err());
        assert!(PendulumParams { half_length: 0.5, mass: -1.0 }.validate().is_err());
    }
}
