//! Dynamics, controller synthesis and closed-loop simulation for a quadrotor
//! balancing an inverted spherical pendulum.

pub mod controllers;
pub mod harness;
pub mod models;
pub mod numerics;
pub mod trajectories;

pub use controllers::{ControllerDesign, ControllerError, TrackingGains};
pub use harness::{compute_metrics, run_scenario, ControllerKind, Metrics, NoiseSpec, PendulumSetup, Scenario, SimLog};
pub use models::{ControlCommand, Mixer, PendulumParams, PendulumState, QuadState, VehicleParams, Wrench};
pub use trajectories::TrajectorySpec;
