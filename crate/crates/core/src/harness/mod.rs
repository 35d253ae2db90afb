//! Closed-loop simulation: scenario description, the fixed-step loop that
//! composes references, controllers, saturation, process noise and the
//! coupled plant, and the summary metrics computed from a finished log.

mod metrics;
mod scenario;
mod sim;

pub use metrics::{compute_metrics, rms, settling_time, sign_changes_after_peak, Metrics, MetricsError, PendulumMetrics};
pub use scenario::{ControllerKind, MetricsSpec, NoiseSpec, PendulumSetup, Scenario};
pub use sim::{
    coupled_derivative, coupled_step, pack_state, run_scenario, unpack_state, AbortCause, ClfStep, CoupledVector,
    Event, EventKind, SimAbort, SimError, SimLog, StepNoise, StepRecord, MAX_CONSECUTIVE_FAULTS,
};
