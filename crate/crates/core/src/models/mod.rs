//! Continuous-time plant models: the rigid-body quadrotor, its rotor mixer and
//! the inverted spherical pendulum riding on top of it.
//!
//! The world frame is Z-down: gravity is `(0, 0, +g)` and collective thrust
//! enters the translational dynamics with a negative sign through
//! [`gravity_direction_map`]. "Up" therefore means negative `p_Z`.

mod mixer;
mod pendulum;
mod quadrotor;

pub use mixer::{ControlCommand, Mixer, Wrench};
pub use pendulum::{
    check_pendulum_margin, pendulum_derivative, pendulum_drift, pendulum_input_matrix,
    pendulum_zeta, PendulumParams, PendulumState, PENDULUM_MARGIN,
};
pub use quadrotor::{
    euler_rate_matrix, euler_rate_matrix_dot, gravity_direction_map, quad_derivative, QuadState,
    QuadVector, VehicleParams,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("singular attitude: pitch {theta} rad is at or beyond +/-pi/2")]
    SingularAttitude { theta: f64 },
    #[error("pendulum horizontal: a^2 + b^2 = {radius_sq} exceeds limit {limit_sq}")]
    PendulumHorizontal { radius_sq: f64, limit_sq: f64 },
    #[error("non-finite state component `{0}`")]
    NonFinite(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
