//! Numerical machinery: fixed-step integration, Riccati equations, dense
//! quadratic programs and finite-difference linearization.

mod care;
mod integrate;
mod linearize;
mod qp;

pub use care::{controllability_rank, solve_care, solve_lyapunov, CareError, CareProblem, CareSolution};
pub use integrate::{euler_step, rk4_step, IntegrationError, StepMethod, StepperConfig};
pub use linearize::{linearize, LinearizeError};
pub use qp::{solve_qp, solve_qp_from, QpError, QpProblem, QpSolution};
