//! Continuous-time algebraic Riccati equation
//!
//! ```text
//! F^T P + P F - P G R^{-1} G^T P + Q = 0
//! ```
//!
//! The stabilizing solution is read off the stable invariant subspace of the
//! Hamiltonian `[[F, -S], [-Q, -F^T]]` (`S = G R^{-1} G^T`), which is obtained
//! from the matrix sign function. A few Kleinman-Newton sweeps then polish the
//! result down to rounding level.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CareError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("(F, G) is not stabilizable: mode {re:+.6}{im:+.6}i is uncontrollable")]
    NotStabilizable { re: f64, im: f64 },
    #[error("no stabilizing solution: {0}")]
    NoSolution(String),
    #[error("residual {residual:e} above tolerance {tolerance:e}")]
    Inaccurate { residual: f64, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CareProblem {
    /// State matrix `F` (n x n).
    pub state: DMatrix<f64>,
    /// Input matrix `G` (n x m).
    pub input: DMatrix<f64>,
    /// State weight `Q` (n x n, symmetric positive definite).
    pub state_weight: DMatrix<f64>,
    /// Input weight `R` (m x m, symmetric positive definite).
    pub input_weight: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    /// Optimal feedback `K = R^{-1} G^T P`.
    pub gain: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual.
    pub residual: f64,
    /// Largest real part in the spectrum of `F - G K`.
    pub closed_loop_abscissa: f64,
}

impl CareProblem {
    pub fn new(
        state: DMatrix<f64>,
        input: DMatrix<f64>,
        state_weight: DMatrix<f64>,
        input_weight: DMatrix<f64>,
    ) -> Self {
        Self { state, input, state_weight, input_weight }
    }

    fn check(&self) -> Result<(), CareError> {
        let n = self.state.nrows();
        if n == 0 || self.state.ncols() != n {
            return Err(CareError::Dimension(format!("F must be square and non-empty, got {:?}", self.state.shape())));
        }
        if self.input.nrows() != n || self.input.ncols() == 0 {
            return Err(CareError::Dimension(format!("G must be {n} x m, got {:?}", self.input.shape())));
        }
        let m = self.input.ncols();
        if self.state_weight.shape() != (n, n) {
            return Err(CareError::Dimension(format!("Q must be {n} x {n}")));
        }
        if self.input_weight.shape() != (m, m) {
            return Err(CareError::Dimension(format!("R must be {m} x {m}")));
        }
        check_spd(&self.state_weight, "Q")?;
        check_spd(&self.input_weight, "R")?;
        Ok(())
    }

    /// `F^T P + P F - P S P + Q`.
    pub fn residual(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.coupling();
        self.state.transpose() * p + p * &self.state - p * s * p + &self.state_weight
    }

    fn coupling(&self) -> DMatrix<f64> {
        let r_inv = self
            .input_weight
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| self.input_weight.clone().try_inverse().expect("R checked positive definite"));
        &self.input * r_inv * self.input.transpose()
    }

    fn gain(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let rhs = self.input.transpose() * p;
        self.input_weight.clone().cholesky().expect("R checked positive definite").solve(&rhs)
    }
}

fn check_spd(m: &DMatrix<f64>, name: &str) -> Result<(), CareError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CareError::InvalidProblem(format!("{name} has non-finite entries")));
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * m.norm().max(1.0) {
        return Err(CareError::InvalidProblem(format!("{name} is not symmetric")));
    }
    let min_eig = m.clone().symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(CareError::InvalidProblem(format!(
            "{name} is not positive definite (smallest eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

/// Solves `A^T X + X A = -M` by vectorization. Only meant for the small
/// systems used here (n^2 unknowns).
pub fn solve_lyapunov(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, m.as_slice());
    let vec_x = op.lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, vec_x.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

/// Rank of the controllability matrix `[B, AB, ..., A^{n-1} B]`.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    let sv = ctrb.singular_values();
    let tol = sv.max() * 1e-10 * (n * m) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Popov-Belevitch-Hautus test on every non-stable mode of `F`.
fn check_stabilizable(f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(), CareError> {
    let n = f.nrows();
    let m = g.ncols();
    let scale = f.norm().max(g.norm()).max(1.0);
    for lambda in f.complex_eigenvalues().iter() {
        if lambda.re < -1e-9 * scale {
            continue;
        }
        let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                pbh[(i, j)] = Complex::new(f[(i, j)], 0.0);
            }
            pbh[(i, i)] -= lambda;
            for j in 0..m {
                pbh[(i, n + j)] = Complex::new(g[(i, j)], 0.0);
            }
        }
        let sv = pbh.singular_values();
        if sv.min() <= 1e-9 * scale {
            return Err(CareError::NotStabilizable { re: lambda.re, im: lambda.im });
        }
    }
    Ok(())
}

fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>, CareError> {
    let dim = h.nrows();
    let mut w = h.clone();
    for _ in 0..200 {
        let lu = w.clone().lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| CareError::NoSolution("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let det = w.clone().lu().determinant().abs();
        let c = if det.is_finite() && det > 0.0 { det.powf(-1.0 / dim as f64) } else { 1.0 };
        let next = (&w * c + inv / c) * 0.5;
        let change = (&next - &w).norm();
        w = next;
        if !change.is_finite() {
            break;
        }
        if change <= 1e-13 * w.norm() {
            return Ok(w);
        }
    }
    Err(CareError::NoSolution("matrix sign iteration did not converge".into()))
}

pub fn solve_care(problem: &CareProblem) -> Result<CareSolution, CareError> {
    problem.check()?;
    let f = &problem.state;
    let q = &problem.state_weight;
    let n = f.nrows();
    check_stabilizable(f, &problem.input)?;

    let s = problem.coupling();
    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(f);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&s));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-f.transpose()));

    let sign = matrix_sign(&ham)?;
    // (W + I) [I; P] = 0  =>  [W12; W22 + I] P = -[W11 + I; W21]
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&sign.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(sign.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(sign.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-sign.view((n, 0), (n, n))));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| CareError::NoSolution(format!("stable subspace extraction failed: {e}")))?;
    let mut p = (&p + p.transpose()) * 0.5;
    let mut residual = problem.residual(&p).norm();

    // Kleinman-Newton polish
    for _ in 0..6 {
        if residual <= 1e-14 * q.norm() {
            break;
        }
        let k = problem.gain(&p);
        let a_cl = f - &problem.input * &k;
        let m = q + k.transpose() * &problem.input_weight * &k;
        let Some(next) = solve_lyapunov(&a_cl, &m) else { break };
        let next_residual = problem.residual(&next).norm();
        if !(next_residual < residual) {
            break;
        }
        p = next;
        residual = next_residual;
    }

    let tolerance = 1e-8 * q.norm();
    if !(residual < tolerance) {
        return Err(CareError::Inaccurate { residual, tolerance });
    }
    let gain = problem.gain(&p);
    let closed_loop_abscissa = spectral_abscissa(&(f - &problem.input * &gain));
    if !(closed_loop_abscissa < -1e-10) {
        return Err(CareError::NoSolution(format!(
            "closed loop is not Hurwitz (spectral abscissa {closed_loop_abscissa:e})"
        )));
    }
    if !(p.clone().symmetric_eigenvalues().min() > 0.0) {
        return Err(CareError::NoSolution("solution is not positive definite".into()));
    }
    Ok(CareSolution { p, gain, residual, closed_loop_abscissa })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn double_integrator() -> CareProblem {
        CareProblem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
    }

    #[test]
    fn double_integrator_matches_hand_solution() {
        // p12 = 1, p22 = sqrt(3), p11 = sqrt(3) from the three scalar equations
        let sol = solve_care(&double_integrator()).unwrap();
        let s3 = 3f64.sqrt();
        assert_relative_eq!(sol.p, DMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]), epsilon = 1e-12);
        assert!(sol.residual < 1e-8);
        assert!(sol.closed_loop_abscissa < 0.0);
    }

    #[test]
    fn stable_plant_with_shared_input() {
        let prob = CareProblem::new(
            -DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        );
        let sol = solve_care(&prob).unwrap();
        assert_eq!(sol.p, sol.p.transpose());
        assert!(prob.residual(&sol.p).norm() < 1e-8 * 2f64.sqrt());
    }

    #[test]
    fn uncontrollable_unstable_mode_is_rejected() {
        let prob = CareProblem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        );
        assert!(matches!(solve_care(&prob), Err(CareError::NotStabilizable { .. })));
    }

    #[test]
    fn indefinite_weight_is_rejected() {
        let mut prob = double_integrator();
        prob.state_weight = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(solve_care(&prob), Err(CareError::InvalidProblem(_))));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut prob = double_integrator();
        prob.input = DMatrix::zeros(3, 1);
        assert!(matches!(solve_care(&prob), Err(CareError::Dimension(_))));
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
        let m = DMatrix::identity(3, 3);
        let x = solve_lyapunov(&a, &m).unwrap();
        assert!((a.transpose() * &x + &x * &a + &m).norm() < 1e-12);
    }

    #[test]
    fn controllability_of_double_integrator() {
        let p = double_integrator();
        assert_eq!(controllability_rank(&p.state, &p.input), 2);
        assert_eq!(controllability_rank(&p.state, &DMatrix::from_row_slice(2, 1, &[1.0, 0.0])), 1);
    }
}
