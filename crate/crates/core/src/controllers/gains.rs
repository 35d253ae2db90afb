use nalgebra::{DMatrix, SMatrix, SVector, Vector2, Vector3, Vector4};

use super::pendulum::linearized_pendulum_model;
use super::ControllerError;
use crate::models::PendulumParams;
use crate::numerics::{solve_care, CareProblem};

/// Every tunable gain used by the controller family. Diagonal weights are
/// stored as vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingGains {
    /// Output position gain `alpha_1` (per channel of `y`).
    pub alpha1: Vector4<f64>,
    /// Output velocity gain `alpha_2`.
    pub alpha2: Vector4<f64>,
    /// Position-loop proportional gain per world axis.
    pub kp: Vector3<f64>,
    /// Position-loop derivative gain per world axis.
    pub kd: Vector3<f64>,
    /// Diagonal of the CARE state weight for the output error dynamics.
    pub q_care: SVector<f64, 8>,
    /// Pendulum velocity gain `K_1`.
    pub k1: Vector2<f64>,
    /// Pendulum position gain `K_2`.
    pub k2: Vector2<f64>,
    pub q_lqr: SVector<f64, 8>,
    pub r_lqr: Vector2<f64>,
    /// Bound on the roll and pitch set-points produced by the LQR (rad).
    pub lqr_attitude_limit: f64,
    /// Feed the reference acceleration forward through the LQR.
    pub lqr_feedforward: bool,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self {
            alpha1: Vector4::repeat(100.0),
            alpha2: Vector4::repeat(20.0),
            kp: Vector3::repeat(4.0),
            kd: Vector3::repeat(4.0),
            q_care: SVector::repeat(1.0),
            k1: Vector2::repeat(8.0),
            k2: Vector2::repeat(16.0),
            q_lqr: SVector::<f64, 8>::from_column_slice(&[10.0, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
            r_lqr: Vector2::new(100.0, 100.0),
            lqr_attitude_limit: 0.5,
            lqr_feedforward: true,
        }
    }
}

impl TrackingGains {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let groups: [(&str, &[f64]); 9] = [
            ("alpha1", self.alpha1.as_slice()),
            ("alpha2", self.alpha2.as_slice()),
            ("kp", self.kp.as_slice()),
            ("kd", self.kd.as_slice()),
            ("q_care", self.q_care.as_slice()),
            ("k1", self.k1.as_slice()),
            ("k2", self.k2.as_slice()),
            ("q_lqr", self.q_lqr.as_slice()),
            ("r_lqr", self.r_lqr.as_slice()),
        ];
        for (name, values) in groups {
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(ControllerError::InvalidGains(format!("{name} entries must be positive, got {v}")));
            }
        }
        if !(self.lqr_attitude_limit > 0.0 && self.lqr_attitude_limit < std::f64::consts::FRAC_PI_2) {
            return Err(ControllerError::InvalidGains(format!(
                "lqr_attitude_limit must lie in (0, pi/2), got {}",
                self.lqr_attitude_limit
            )));
        }
        Ok(())
    }
}

/// Output error dynamics `eta_dot = F eta + G mu`: four decoupled double
/// integrators driven by the error acceleration `mu`.
pub fn output_error_dynamics() -> (SMatrix<f64, 8, 8>, SMatrix<f64, 8, 4>) {
    let mut f = SMatrix::<f64, 8, 8>::zeros();
    let mut g = SMatrix::<f64, 8, 4>::zeros();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
        g[(i + 4, i)] = 1.0;
    }
    (f, g)
}

/// Quadratic control Lyapunov function `V = eta^T P eta` for the output
/// error dynamics, with `P` from the Riccati equation under `R = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputClf {
    pub p: SMatrix<f64, 8, 8>,
    /// `G^T P`, the optimal feedback gain.
    pub gain: SMatrix<f64, 4, 8>,
    /// Guaranteed decay rate `lambda_min(Q) / lambda_max(P)`.
    pub c3: f64,
    pub f: SMatrix<f64, 8, 8>,
    pub g: SMatrix<f64, 8, 4>,
}

impl OutputClf {
    pub fn design(q_diag: &SVector<f64, 8>) -> Result<Self, ControllerError> {
        let (f, g) = output_error_dynamics();
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(q_diag.as_slice()));
        let problem = CareProblem::new(
            DMatrix::from_column_slice(8, 8, f.as_slice()),
            DMatrix::from_column_slice(8, 4, g.as_slice()),
            q,
            DMatrix::identity(4, 4),
        );
        let sol = solve_care(&problem)?;
        let p = SMatrix::<f64, 8, 8>::from_column_slice(sol.p.as_slice());
        let gain = g.transpose() * p;
        let lambda_max_p = p.symmetric_eigenvalues().max();
        let c3 = q_diag.min() / lambda_max_p;
        Ok(Self { p, gain, c3, f, g })
    }

    pub fn value(&self, eta: &SVector<f64, 8>) -> f64 {
        (eta.transpose() * self.p * eta)[0]
    }

    /// `V_dot` for the error acceleration `mu`.
    pub fn rate(&self, eta: &SVector<f64, 8>, mu: &Vector4<f64>) -> f64 {
        2.0 * (eta.transpose() * self.p * (self.f * eta + self.g * mu))[0]
    }
}

/// LQR for the pendulum-plus-position model linearized at hover, with state
/// `[a, b, p_X, p_Y, a_dot, b_dot, v_X, v_Y]` and input `[phi, theta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumLqr {
    pub a: SMatrix<f64, 8, 8>,
    pub b: SMatrix<f64, 8, 2>,
    pub gain: SMatrix<f64, 2, 8>,
    pub p: SMatrix<f64, 8, 8>,
    pub attitude_limit: f64,
}

impl PendulumLqr {
    pub fn design(
        pendulum: &PendulumParams,
        gravity: f64,
        q_diag: &SVector<f64, 8>,
        r_diag: &Vector2<f64>,
        attitude_limit: f64,
    ) -> Result<Self, ControllerError> {
        let (a, b) = linearized_pendulum_model(pendulum, gravity);
        let problem = CareProblem::new(
            DMatrix::from_column_slice(8, 8, a.as_slice()),
            DMatrix::from_column_slice(8, 2, b.as_slice()),
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(q_diag.as_slice())),
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(r_diag.as_slice())),
        );
        let sol = solve_care(&problem)?;
        Ok(Self {
            a,
            b,
            gain: SMatrix::<f64, 2, 8>::from_column_slice(sol.gain.as_slice()),
            p: SMatrix::<f64, 8, 8>::from_column_slice(sol.p.as_slice()),
            attitude_limit,
        })
    }
}

/// Gains plus everything solved from them once at setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDesign {
    pub gains: TrackingGains,
    pub clf: OutputClf,
    pub lqr: Option<PendulumLqr>,
}

impl ControllerDesign {
    pub fn new(gains: TrackingGains, pendulum: Option<&PendulumParams>, gravity: f64) -> Result<Self, ControllerError> {
        gains.validate()?;
        let clf = OutputClf::design(&gains.q_care)?;
        let lqr = pendulum
            .map(|pp| PendulumLqr::design(pp, gravity, &gains.q_lqr, &gains.r_lqr, gains.lqr_attitude_limit))
            .transpose()?;
        Ok(Self { gains, clf, lqr })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn output_clf_is_four_double_integrator_blocks() {
        let clf = OutputClf::design(&SVector::repeat(1.0)).unwrap();
        let s3 = 3f64.sqrt();
        for i in 0..4 {
            assert_relative_eq!(clf.p[(i, i)], s3, epsilon = 1e-9);
            assert_relative_eq!(clf.p[(i, i + 4)], 1.0, epsilon = 1e-9);
            assert_relative_eq!(clf.p[(i + 4, i + 4)], s3, epsilon = 1e-9);
            for j in 0..4 {
                if j != i {
                    assert!(clf.p[(i, j)].abs() < 1e-9);
                    assert!(clf.p[(i, j + 4)].abs() < 1e-9);
                    assert!(clf.p[(i + 4, j + 4)].abs() < 1e-9);
                }
            }
        }
        assert_relative_eq!(clf.c3, 1.0 / (s3 + 1.0), epsilon = 1e-9);
    }

    #[test]
    fn lqr_closed_loop_is_hurwitz() {
        let g = TrackingGains::default();
        let lqr = PendulumLqr::design(&PendulumParams::default(), 9.81, &g.q_lqr, &g.r_lqr, 0.5).unwrap();
        let cl = lqr.a - lqr.b * lqr.gain;
        let worst = cl.complex_eigenvalues().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        assert!(worst < 0.0, "{worst}");
    }

    #[test]
    fn default_gains_validate_and_bad_ones_do_not() {
        assert!(TrackingGains::default().validate().is_ok());
        let bad = TrackingGains { kp: Vector3::new(1.0, -1.0, 1.0), ..TrackingGains::default() };
        assert!(matches!(bad.validate(), Err(ControllerError::InvalidGains(_))));
    }
}
