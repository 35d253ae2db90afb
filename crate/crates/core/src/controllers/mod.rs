//! Controller syntheses: feedback-linearizing output regulation and tracking,
//! position-to-attitude force allocation, the CLF-QP, pendulum feedback
//! linearization and the linearized pendulum-plus-position LQR.
//!
//! The controlled output is `y = [p_Z, phi, theta, psi]`, every channel with
//! relative degree two. Output-space error states are ordered
//! `eta = [y - y_d; y_dot - y_d_dot]`.

mod allocation;
mod clf_qp;
mod gains;
mod output;
mod pendulum;

pub use allocation::{attitude_from_force, position_allocation, AttitudeSetpoint, PositionReference};
pub use clf_qp::{clf_qp_controller, ClfQpReport, CLF_SLACK_WEIGHT};
pub use gains::{output_error_dynamics, ControllerDesign, OutputClf, PendulumLqr, TrackingGains};
pub use output::{
    fbl_regulator, fbl_terms, fbl_tracker, output_error, output_state, FblTerms, OutputReference,
    DECOUPLING_MARGIN,
};
pub use pendulum::{
    linearized_pendulum_model, pendulum_fbl_xi, pendulum_fbl_xi_prime, pendulum_position_lqr,
    pendulum_virtual_input, LqrReference, PendulumReference,
};

use crate::models::ModelError;
use crate::numerics::{CareError, QpError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("decoupling matrix singular: cos(phi) cos(theta) = {cos_product:e}")]
    DecouplingSingularity { cos_product: f64 },
    #[error("desired thrust vector degenerate (norm {norm:e})")]
    DegenerateThrust { norm: f64 },
    #[error("desired thrust points downward (f_z = {f_z})")]
    InvertedThrust { f_z: f64 },
    #[error("planar pendulum input matrix near singular (det {det:e})")]
    PendulumSingular { det: f64 },
    #[error("non-finite reference channel `{0}`")]
    BadReference(&'static str),
    #[error("gain design failed: {0}")]
    Design(#[from] CareError),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("quadratic program failed: {0}")]
    Qp(#[from] QpError),
}
