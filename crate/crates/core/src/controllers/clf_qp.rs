use nalgebra::{DMatrix, DVector, SVector, Vector4};

use super::gains::OutputClf;
use super::output::{fbl_terms, output_error, OutputReference};
use super::ControllerError;
use crate::models::{ControlCommand, Mixer, QuadState, VehicleParams};
use crate::numerics::{solve_qp, QpError, QpProblem};

/// Penalty on the decrease-row slack when the hard problem is infeasible.
pub const CLF_SLACK_WEIGHT: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct ClfQpReport {
    /// Error acceleration chosen by the QP.
    pub mu: Vector4<f64>,
    /// `V(eta)` at the current state.
    pub lyapunov: f64,
    /// `V_dot + c3 V` predicted for the chosen input (non-positive unless relaxed).
    pub decrease_margin: f64,
    /// The decrease row had to be softened.
    pub relaxed: bool,
    pub slack: f64,
    /// Active rows: 0 is the decrease row (if present), then upper and lower
    /// rotor bounds.
    pub active: Vec<usize>,
    pub iterations: usize,
}

/// Minimum-effort output acceleration subject to `V_dot <= -c3 V` and rotor
/// bounds.
///
/// The decision variable is the error acceleration `mu = y_ddot - y_d_ddot`,
/// so that `u = (A B)^{-1} (mu + y_d_ddot - L_f h)` and the cost is `mu^T mu`.
pub fn clf_qp_controller(
    state: &QuadState,
    reference: &OutputReference,
    params: &VehicleParams,
    mixer: &Mixer,
    clf: &OutputClf,
) -> Result<(ControlCommand, ClfQpReport), ControllerError> {
    let terms = fbl_terms(state, params)?;
    let eta = output_error(state, reference)?;
    let m_inv = mixer.inverse_matrix() * terms.decoupling_inverse();
    let offset = m_inv * (reference.accel - terms.drift);

    let lyapunov = clf.value(&eta);
    let clf_row: SVector<f64, 4> = (2.0 * eta.transpose() * clf.p * clf.g).transpose();
    let clf_bound = -(2.0 * (eta.transpose() * clf.p * clf.f * eta)[0] + clf.c3 * lyapunov);

    let mut rows: Vec<(Vector4<f64>, f64)> = Vec::with_capacity(9);
    let row_norm = clf_row.norm();
    let has_clf_row = row_norm > 1e-12 || clf_bound < 0.0;
    if has_clf_row {
        let scale = row_norm.max(1e-12);
        rows.push((clf_row / scale, clf_bound / scale));
    }
    for i in 0..4 {
        let r = m_inv.row(i).transpose();
        let n = r.norm();
        rows.push((r / n, (params.u_max[i] - offset[i]) / n));
    }
    for i in 0..4 {
        let r = m_inv.row(i).transpose();
        let n = r.norm();
        rows.push((-r / n, (offset[i] - params.u_min[i]) / n));
    }

    let k = rows.len();
    let mut a = DMatrix::zeros(k, 4);
    let mut b = DVector::zeros(k);
    for (i, (r, bound)) in rows.iter().enumerate() {
        a.row_mut(i).copy_from(&r.transpose());
        b[i] = *bound;
    }
    let hard = QpProblem::new(DMatrix::identity(4, 4) * 2.0, DVector::zeros(4), a.clone(), b.clone());

    let (mu, relaxed, slack, active, iterations) = match solve_qp(&hard) {
        Ok(sol) => {
            let mu = Vector4::from_column_slice(sol.x.as_slice());
            (mu, false, 0.0, relabel(&sol.active, has_clf_row), sol.iterations)
        }
        Err(QpError::Infeasible { .. }) if has_clf_row => {
            let mut a5 = DMatrix::zeros(k + 1, 5);
            a5.view_mut((0, 0), (k, 4)).copy_from(&a);
            a5[(0, 4)] = -1.0;
            a5[(k, 4)] = -1.0;
            let mut b5 = DVector::zeros(k + 1);
            b5.rows_mut(0, k).copy_from(&b);
            let mut h5 = DMatrix::zeros(5, 5);
            h5.view_mut((0, 0), (4, 4)).fill_with_identity();
            h5.view_mut((0, 0), (4, 4)).scale_mut(2.0);
            let mut f5 = DVector::zeros(5);
            f5[4] = CLF_SLACK_WEIGHT;
            let sol = solve_qp(&QpProblem::new(h5, f5, a5, b5))?;
            let mu = Vector4::new(sol.x[0], sol.x[1], sol.x[2], sol.x[3]);
            let active = sol.active.iter().copied().filter(|&r| r < k).collect::<Vec<_>>();
            (mu, true, sol.x[4].max(0.0), relabel(&active, true), sol.iterations)
        }
        Err(e) => return Err(e.into()),
    };

    let rotor = m_inv * mu + offset;
    let command = ControlCommand::from_rotor(rotor, mixer);
    let decrease_margin = clf.rate(&eta, &mu) + clf.c3 * lyapunov;
    let report = ClfQpReport { mu, lyapunov, decrease_margin, relaxed, slack, active, iterations };
    Ok((command, report))
}

/// Renumber working-set rows so the decrease row is always 0 and rotor rows
/// start at 1, whether or not the decrease row was dropped.
fn relabel(active: &[usize], has_clf_row: bool) -> Vec<usize> {
    if has_clf_row {
        active.to_vec()
    } else {
        active.iter().map(|r| r + 1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn setup() -> (VehicleParams, Mixer, OutputClf) {
        let p = VehicleParams::default();
        let m = Mixer::new(&p).unwrap();
        let clf = OutputClf::design(&SVector::repeat(1.0)).unwrap();
        (p, m, clf)
    }

    #[test]
    fn zero_error_gives_gravity_compensation() {
        let (p, mixer, clf) = setup();
        let s = QuadState::at_rest(Vector3::new(0.0, 0.0, -2.0));
        let r = OutputReference::set_point(Vector4::new(-2.0, 0.0, 0.0, 0.0));
        let (cmd, report) = clf_qp_controller(&s, &r, &p, &mixer, &clf).unwrap();
        assert_eq!(report.mu, Vector4::zeros());
        assert!(!report.relaxed);
        assert!((cmd.wrench().thrust - p.mass * p.gravity).abs() < 1e-9);
        assert!(cmd.wrench().torque.norm() < 1e-9);
    }

    #[test]
    fn inactive_decrease_row_leaves_mu_at_zero() {
        let (p, mixer, clf) = setup();
        // moving toward the reference fast enough that V already decays
        let s = QuadState {
            velocity: Vector3::new(0.0, 0.0, -0.5),
            ..QuadState::at_rest(Vector3::new(0.0, 0.0, 0.5))
        };
        let r = OutputReference::set_point(Vector4::zeros());
        let eta = output_error(&s, &r).unwrap();
        assert!(clf.rate(&eta, &Vector4::zeros()) + clf.c3 * clf.value(&eta) < 0.0);
        let (_, report) = clf_qp_controller(&s, &r, &p, &mixer, &clf).unwrap();
        assert_eq!(report.mu, Vector4::zeros());
        assert!(report.active.is_empty());
    }

    #[test]
    fn active_decrease_row_holds_with_equality() {
        let (p, mixer, clf) = setup();
        let s = QuadState {
            attitude: Vector3::new(0.05, -0.03, 0.02),
            ..QuadState::at_rest(Vector3::new(0.0, 0.0, -0.9))
        };
        let r = OutputReference::set_point(Vector4::new(-1.0, 0.0, 0.0, 0.0));
        let (cmd, report) = clf_qp_controller(&s, &r, &p, &mixer, &clf).unwrap();
        assert!(!report.relaxed);
        assert_eq!(report.active, vec![0]);
        assert!(report.decrease_margin.abs() < 1e-9 * report.lyapunov.max(1.0));
        assert!(cmd.bound_violation(&p.u_min, &p.u_max) < 1e-9);
    }

    #[test]
    fn tight_bounds_force_relaxation() {
        let (mut p, mixer, clf) = setup();
        let hover = p.hover_command();
        p.u_min = Vector4::repeat(0.999 * hover);
        p.u_max = Vector4::repeat(1.001 * hover);
        let s = QuadState::at_rest(Vector3::new(0.0, 0.0, 0.0));
        let r = OutputReference::set_point(Vector4::new(-3.0, 0.0, 0.0, 0.0));
        let (cmd, report) = clf_qp_controller(&s, &r, &p, &mixer, &clf).unwrap();
        assert!(report.relaxed);
        assert!(report.slack > 0.0);
        assert!(cmd.bound_violation(&p.u_min, &p.u_max) < 1e-9);
    }
}
