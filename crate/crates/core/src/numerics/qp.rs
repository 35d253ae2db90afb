//! Dense convex quadratic programming
//!
//! ```text
//!     minimize     1/2 x' H x + f' x
//!     subject to   A x <= b
//! ```
//!
//! Primal active-set method on the null space of the working set. `H` only
//! needs to be positive semidefinite: directions of zero curvature are
//! followed as rays until a constraint blocks them, or reported as
//! unboundedness when nothing does. A feasible start is found with a
//! phase-one program that minimizes a single elastic variable.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    /// `certificate` lists constraint rows that cannot hold simultaneously.
    #[error("infeasible (residual violation {violation:e}, conflicting rows {certificate:?})")]
    Infeasible { certificate: Vec<usize>, violation: f64 },
    #[error("objective is unbounded below on the feasible set")]
    Unbounded,
    #[error("active-set iteration limit reached ({0})")]
    MaxIterations(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// Inequality rows, `constraints * x <= bounds`.
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One non-negative multiplier per inequality row.
    pub multipliers: DVector<f64>,
    /// Rows in the final working set, ascending.
    pub active: Vec<usize>,
    pub iterations: usize,
    pub objective: f64,
}

impl QpProblem {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>, constraints: DMatrix<f64>, bounds: DVector<f64>) -> Self {
        Self { hessian, linear, constraints, bounds }
    }

    /// Problem with no inequality rows.
    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self::new(hessian, linear, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.bounds.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    /// Largest positive entry of `A x - b`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        if self.num_constraints() == 0 {
            return 0.0;
        }
        (&self.constraints * x - &self.bounds).max().max(0.0)
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.hessian.shape() != (n, n) {
            return Err(QpError::Dimension(format!("H must be {n} x {n}, got {:?}", self.hessian.shape())));
        }
        let k = self.num_constraints();
        if self.constraints.shape() != (k, n) {
            return Err(QpError::Dimension(format!("A must be {k} x {n}, got {:?}", self.constraints.shape())));
        }
        let finite = self.hessian.iter().chain(self.linear.iter()).chain(self.constraints.iter()).chain(self.bounds.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(QpError::InvalidProblem("non-finite data".into()));
        }
        let scale = self.hessian.norm().max(1.0);
        if (&self.hessian - self.hessian.transpose()).norm() > 1e-12 * scale {
            return Err(QpError::InvalidProblem("H is not symmetric".into()));
        }
        if n > 0 && self.hessian.clone().symmetric_eigenvalues().min() < -1e-10 * scale {
            return Err(QpError::InvalidProblem("H is not positive semidefinite".into()));
        }
        Ok(())
    }
}

pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve_qp_from(problem, None)
}

/// Like [`solve_qp`], starting from `guess` when it is feasible.
pub fn solve_qp_from(problem: &QpProblem, guess: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
    problem.check()?;
    let n = problem.dim();
    let start = match guess {
        Some(g) if g.len() == n => g.clone(),
        Some(g) => return Err(QpError::Dimension(format!("initial guess has length {}, expected {n}", g.len()))),
        None => DVector::zeros(n),
    };
    let (x0, phase1_iters) = feasible_point(problem, start)?;
    let max_iter = 50 * (n + problem.num_constraints() + 1);
    let mut run = ActiveSet::new(&problem.hessian, &problem.linear, &problem.constraints, &problem.bounds);
    let x = run.solve(x0, max_iter)?;

    let mut multipliers = DVector::zeros(problem.num_constraints());
    for (&row, &lambda) in run.working.iter().zip(run.working_multipliers.iter()) {
        multipliers[row] = lambda.max(0.0);
    }
    let mut active = run.working.clone();
    active.sort_unstable();
    Ok(QpSolution {
        objective: problem.objective(&x),
        x,
        multipliers,
        active,
        iterations: run.iterations + phase1_iters,
    })
}

/// Phase one: minimize the elastic variable `t >= 0` subject to `A x - t <= b`.
fn feasible_point(problem: &QpProblem, start: DVector<f64>) -> Result<(DVector<f64>, usize), QpError> {
    let k = problem.num_constraints();
    let n = problem.dim();
    if k == 0 {
        return Ok((start, 0));
    }
    let initial_violation = problem.max_violation(&start);
    if initial_violation == 0.0 {
        return Ok((start, 0));
    }
    let mut a = DMatrix::zeros(k + 1, n + 1);
    a.view_mut((0, 0), (k, n)).copy_from(&problem.constraints);
    for i in 0..k {
        a[(i, n)] = -1.0;
    }
    a[(k, n)] = -1.0;
    let mut b = DVector::zeros(k + 1);
    b.rows_mut(0, k).copy_from(&problem.bounds);
    let h = DMatrix::zeros(n + 1, n + 1);
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;

    let mut x0 = DVector::zeros(n + 1);
    x0.rows_mut(0, n).copy_from(&start);
    x0[n] = initial_violation;

    let mut run = ActiveSet::new(&h, &f, &a, &b);
    let z = run.solve(x0, 50 * (n + k + 2))?;
    let x = z.rows(0, n).into_owned();
    let violation = problem.max_violation(&x);
    let tolerance = 1e-10 * problem.bounds.amax().max(1.0);
    if violation > tolerance {
        let certificate = run
            .working
            .iter()
            .zip(run.working_multipliers.iter())
            .filter(|&(&row, &lambda)| row < k && lambda > 0.0)
            .map(|(&row, _)| row)
            .collect::<Vec<_>>();
        let mut certificate = certificate;
        certificate.sort_unstable();
        return Err(QpError::Infeasible { certificate, violation });
    }
    Ok((x, run.iterations))
}

struct ActiveSet<'a> {
    h: &'a DMatrix<f64>,
    f: &'a DVector<f64>,
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    working: Vec<usize>,
    working_multipliers: Vec<f64>,
    iterations: usize,
}

enum Direction {
    Stationary,
    Newton(DVector<f64>),
    Ray(DVector<f64>),
}

impl<'a> ActiveSet<'a> {
    fn new(h: &'a DMatrix<f64>, f: &'a DVector<f64>, a: &'a DMatrix<f64>, b: &'a DVector<f64>) -> Self {
        Self { h, f, a, b, working: Vec::new(), working_multipliers: Vec::new(), iterations: 0 }
    }

    fn working_rows(&self) -> DMatrix<f64> {
        let n = self.h.nrows();
        DMatrix::from_fn(self.working.len(), n, |i, j| self.a[(self.working[i], j)])
    }

    /// Orthonormal basis of the null space of the working rows.
    fn null_space(&self) -> DMatrix<f64> {
        let n = self.h.nrows();
        if self.working.is_empty() {
            return DMatrix::identity(n, n);
        }
        let aw = self.working_rows();
        let gram = &aw * aw.transpose();
        let proj = match gram.cholesky() {
            Some(c) => DMatrix::identity(n, n) - aw.transpose() * c.solve(&aw),
            None => return DMatrix::zeros(n, 0),
        };
        let eig = proj.symmetric_eigen();
        let cols = (0..n).filter(|&j| eig.eigenvalues[j] > 0.5).collect::<Vec<_>>();
        DMatrix::from_fn(n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])])
    }

    fn direction(&self, g: &DVector<f64>) -> Direction {
        let z = self.null_space();
        if z.ncols() == 0 {
            return Direction::Stationary;
        }
        let reduced_h = z.transpose() * self.h * &z;
        let reduced_g = z.transpose() * g;
        let eig = reduced_h.symmetric_eigen();
        let coeffs = eig.eigenvectors.transpose() * &reduced_g;
        let curvature_tol = 1e-12 * self.h.norm().max(1.0);
        let gradient_tol = 1e-12 * g.norm().max(1.0);

        let r = z.ncols();
        let mut ray = DVector::zeros(r);
        let mut newton = DVector::zeros(r);
        let mut has_ray = false;
        for j in 0..r {
            let lambda = eig.eigenvalues[j];
            let c = coeffs[j];
            if lambda > curvature_tol {
                newton -= eig.eigenvectors.column(j) * (c / lambda);
            } else if c.abs() > gradient_tol {
                ray -= eig.eigenvectors.column(j) * c;
                has_ray = true;
            }
        }
        if has_ray {
            return Direction::Ray(&z * ray);
        }
        let p = &z * newton;
        if p.norm() <= 1e-13 * (1.0 + g.norm()) {
            Direction::Stationary
        } else {
            Direction::Newton(p)
        }
    }

    /// Step length to the first blocking row along `p`, with its index.
    fn ratio_test(&self, x: &DVector<f64>, p: &DVector<f64>) -> Option<(f64, usize)> {
        let pnorm = p.norm();
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.a.nrows() {
            if self.working.contains(&i) {
                continue;
            }
            let row = self.a.row(i);
            let slope = row.dot(&p.transpose());
            if slope <= 1e-14 * row.norm() * pnorm {
                continue;
            }
            let slack = self.b[i] - row.dot(&x.transpose());
            let alpha = (slack / slope).max(0.0);
            if best.is_none_or(|(a, _)| alpha < a) {
                best = Some((alpha, i));
            }
        }
        best
    }

    fn multipliers(&self, g: &DVector<f64>) -> Vec<f64> {
        let aw = self.working_rows();
        let gram = &aw * aw.transpose();
        let rhs = -(&aw * g);
        let lambda = match gram.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(self.working.len())),
        };
        lambda.iter().copied().collect()
    }

    fn solve(&mut self, mut x: DVector<f64>, max_iter: usize) -> Result<DVector<f64>, QpError> {
        loop {
            if self.iterations >= max_iter {
                return Err(QpError::MaxIterations(max_iter));
            }
            self.iterations += 1;
            let g = self.h * &x + self.f;
            match self.direction(&g) {
                Direction::Stationary => {
                    if self.working.is_empty() {
                        self.working_multipliers.clear();
                        return Ok(x);
                    }
                    let lambda = self.multipliers(&g);
                    let tol = 1e-12 * g.norm().max(1.0);
                    let (worst, value) = lambda
                        .iter()
                        .copied()
                        .enumerate()
                        .fold((0, f64::INFINITY), |acc, (i, l)| if l < acc.1 { (i, l) } else { acc });
                    if value >= -tol {
                        self.working_multipliers = lambda;
                        return Ok(x);
                    }
                    self.working.remove(worst);
                }
                Direction::Newton(p) => match self.ratio_test(&x, &p) {
                    Some((alpha, row)) if alpha < 1.0 => {
                        x += p * alpha;
                        self.working.push(row);
                    }
                    _ => x += p,
                },
                Direction::Ray(d) => match self.ratio_test(&x, &d) {
                    Some((alpha, row)) => {
                        x += d * alpha;
                        self.working.push(row);
                    }
                    None => return Err(QpError::Unbounded),
                },
            }
        }
    }
}
