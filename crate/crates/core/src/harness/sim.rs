use nalgebra::{SVector, Vector2, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use thiserror::Error;

use super::scenario::{ControllerKind, NoiseSpec, PendulumSetup, Scenario};
use crate::controllers::{
    attitude_from_force, clf_qp_controller, fbl_regulator, fbl_terms, fbl_tracker, output_error,
    pendulum_fbl_xi, pendulum_fbl_xi_prime, pendulum_position_lqr, position_allocation, AttitudeSetpoint,
    ControllerDesign, ControllerError, LqrReference, OutputReference, PendulumReference, PositionReference,
};
use crate::models::{
    check_pendulum_margin, pendulum_derivative, quad_derivative, ControlCommand, Mixer, ModelError,
    PendulumParams, PendulumState, QuadState, VehicleParams, Wrench,
};
use crate::numerics::{rk4_step, IntegrationError};
use crate::trajectories::{ReferenceSample, SetpointDifferentiator, TrajectorySpec};

/// Consecutive controller faults tolerated before the run is aborted.
pub const MAX_CONSECUTIVE_FAULTS: usize = 50;

/// Clamps smaller than this are rounding noise and are not reported.
const CLAMP_REPORT_THRESHOLD: f64 = 1e-9;

/// Slack, relaxation flag and iteration count from one CLF-QP solve.
type QpOutcome = (f64, bool, usize);

/// Quadrotor state followed by `[a, b, a_dot, b_dot]`.
pub type CoupledVector = SVector<f64, 16>;

/// Process noise realized for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepNoise {
    pub accel: Vector3<f64>,
    pub angular: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Rotor commands were saturated; `violation` is the largest excursion.
    Clamp { violation: f64 },
    /// The CLF decrease row was softened with a slack variable.
    QpRelaxed { slack: f64 },
    /// The controller failed and the previous command was held.
    Fault { message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub step: usize,
    pub time: f64,
    pub kind: EventKind,
}

/// CLF-QP diagnostics for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfStep {
    pub lyapunov: f64,
    /// `V_dot + c3 V` for the command actually applied after clamping.
    pub decrease_margin: f64,
    pub relaxed: bool,
    pub iterations: usize,
}

/// Everything known at one sample instant. The command is the one applied
/// over the following step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub quad: QuadState,
    pub pendulum: Option<PendulumState>,
    pub command: ControlCommand,
    pub setpoint: AttitudeSetpoint,
    /// Position reference `(p_Xd, p_Yd, p_Zd)`.
    pub reference: Vector3<f64>,
    pub pendulum_reference: Option<Vector2<f64>>,
    pub clf: Option<ClfStep>,
    pub clamped: bool,
    pub relaxed: bool,
    pub fault: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario: String,
    pub controller: ControllerKind,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    pub events: Vec<Event>,
    pub vehicle: VehicleParams,
    /// Half-length of the pendulum, when one is simulated.
    pub pendulum_half_length: Option<f64>,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbortCause {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("integration produced a non-finite state")]
    NonFinite,
    #[error("{count} consecutive controller faults, last: {last}")]
    TooManyFaults { count: usize, last: ControllerError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimAbort {
    pub time: f64,
    pub cause: AbortCause,
    /// Records up to and including the last valid state.
    pub log: SimLog,
}

impl fmt::Display for SimAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario `{}` aborted at t = {}: {}", self.log.scenario, self.time, self.cause)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario `{name}`: {message}")]
    Invalid { name: String, message: String },
    #[error("{0}")]
    Aborted(Box<SimAbort>),
}

pub fn pack_state(quad: &QuadState, pendulum: &PendulumState) -> CoupledVector {
    let mut x = CoupledVector::zeros();
    x.fixed_rows_mut::<12>(0).copy_from(&quad.to_vector());
    x[12] = pendulum.a;
    x[13] = pendulum.b;
    x[14] = pendulum.a_dot;
    x[15] = pendulum.b_dot;
    x
}

pub fn unpack_state(x: &CoupledVector) -> (QuadState, PendulumState) {
    let quad = QuadState::from_vector(&x.fixed_rows::<12>(0).into_owned());
    (quad, PendulumState { a: x[12], b: x[13], a_dot: x[14], b_dot: x[15] })
}

/// Derivative of the coupled state. The pendulum sees the vehicle
/// acceleration realized in the same stage, noise included.
pub fn coupled_derivative(
    x: &CoupledVector,
    wrench: &Wrench,
    noise: &StepNoise,
    vehicle: &VehicleParams,
    pendulum: Option<&PendulumParams>,
) -> Result<CoupledVector, ModelError> {
    let (quad, pend) = unpack_state(x);
    let mut dq = quad_derivative(&quad, wrench, vehicle)?;
    for i in 0..3 {
        dq[3 + i] += noise.accel[i];
        dq[9 + i] += noise.angular[i];
    }
    let mut dx = CoupledVector::zeros();
    dx.fixed_rows_mut::<12>(0).copy_from(&dq);
    if let Some(pp) = pendulum {
        let accel = Vector3::new(dq[3], dq[4], dq[5]);
        let dd = pendulum_derivative(&pend, &accel, pp, vehicle.gravity)?;
        dx[12] = pend.a_dot;
        dx[13] = pend.b_dot;
        dx[14] = dd.x;
        dx[15] = dd.y;
    }
    Ok(dx)
}

/// One RK4 step of the coupled system under a held wrench and noise sample.
pub fn coupled_step(
    x: &CoupledVector,
    t: f64,
    dt: f64,
    wrench: &Wrench,
    noise: &StepNoise,
    vehicle: &VehicleParams,
    pendulum: Option<&PendulumParams>,
) -> Result<CoupledVector, AbortCause> {
    let deriv = |_t: f64, x: &CoupledVector| coupled_derivative(x, wrench, noise, vehicle, pendulum);
    match rk4_step(deriv, t, x, dt) {
        Ok(next) => Ok(next),
        Err(IntegrationError::Derivative { source, .. }) => Err(AbortCause::Model(source)),
        Err(_) => Err(AbortCause::NonFinite),
    }
}

/// Rate of the reference acceleration by central differences of the
/// analytic samples.
fn trajectory_jerk(spec: &TrajectorySpec, t: f64) -> Vector3<f64> {
    let h = 1e-5;
    (spec.sample(t + h).accel - spec.sample(t - h).accel) / (2.0 * h)
}

struct NoiseSource {
    rng: ChaCha8Rng,
    accel: Option<Normal<f64>>,
    angular: Option<Normal<f64>>,
}

impl NoiseSource {
    fn new(scenario: &Scenario) -> Self {
        let n = &scenario.noise;
        let scale = (NoiseSpec::REFERENCE_STEP / scenario.dt).sqrt();
        let dist = |std: f64| (std > 0.0).then(|| Normal::new(0.0, std * scale).expect("std checked"));
        Self { rng: ChaCha8Rng::seed_from_u64(n.seed), accel: dist(n.accel_std), angular: dist(n.angular_std) }
    }

    fn sample(&mut self) -> StepNoise {
        let mut out = StepNoise::default();
        if let Some(d) = &self.accel {
            out.accel = Vector3::from_fn(|_, _| d.sample(&mut self.rng));
        }
        if let Some(d) = &self.angular {
            out.angular = Vector3::from_fn(|_, _| d.sample(&mut self.rng));
        }
        out
    }
}

/// Output of the outer loop for one step.
struct OuterCommand {
    setpoint: AttitudeSetpoint,
    /// `(z_d, z_d_dot, z_d_ddot)` for the altitude channel.
    altitude: [f64; 3],
}

struct Loop<'a> {
    scenario: &'a Scenario,
    design: ControllerDesign,
    mixer: Mixer,
}

impl Loop<'_> {
    fn pendulum_reference(setup: &PendulumSetup, t: f64) -> PendulumReference {
        let r = setup.reference.sample(t);
        PendulumReference {
            value: r.value.fixed_rows::<2>(0).into_owned(),
            rate: r.rate.fixed_rows::<2>(0).into_owned(),
            accel: r.accel.fixed_rows::<2>(0).into_owned(),
        }
    }

    fn outer(
        &self,
        quad: &QuadState,
        pend: &PendulumState,
        pos_ref: &ReferenceSample,
        pend_ref: &PendulumReference,
    ) -> Result<OuterCommand, ControllerError> {
        let sc = self.scenario;
        let gains = &self.design.gains;
        let g = sc.vehicle.gravity;
        let traj_altitude = [pos_ref.value.z, pos_ref.rate.z, pos_ref.accel.z];
        match sc.controller {
            ControllerKind::FblRegulator | ControllerKind::FblTracker | ControllerKind::ClfQp => {
                let r = PositionReference { value: pos_ref.value, rate: pos_ref.rate, accel: pos_ref.accel };
                let setpoint = position_allocation(quad, &r, &sc.vehicle, gains)?;
                Ok(OuterCommand { setpoint, altitude: traj_altitude })
            }
            ControllerKind::PendXi => {
                let pp = &sc.pendulum.as_ref().expect("validated").params;
                let xi = pendulum_fbl_xi(pend, pend_ref, pp, gains, g)?;
                let force = xi - Vector3::new(0.0, 0.0, g);
                let attitude = attitude_from_force(&force, 0.0)?;
                let setpoint = AttitudeSetpoint::new(attitude, sc.vehicle.mass * force.norm(), xi);
                // the vertical channel follows xi directly, without position feedback
                Ok(OuterCommand { setpoint, altitude: [quad.position.z, quad.velocity.z, xi.z] })
            }
            ControllerKind::PendXiPrime => {
                let pp = &sc.pendulum.as_ref().expect("validated").params;
                let [z_d, z_d_dot, z_d_ddot] = traj_altitude;
                let accel_z = z_d_ddot
                    - gains.alpha2[0] * (quad.velocity.z - z_d_dot)
                    - gains.alpha1[0] * (quad.position.z - z_d);
                let xi_p = pendulum_fbl_xi_prime(pend, accel_z, pend_ref, pp, gains, g)?;
                let accel = Vector3::new(xi_p.x, xi_p.y, accel_z);
                let force = accel - Vector3::new(0.0, 0.0, g);
                let attitude = attitude_from_force(&force, 0.0)?;
                let setpoint = AttitudeSetpoint::new(attitude, sc.vehicle.mass * force.norm(), accel);
                Ok(OuterCommand { setpoint, altitude: traj_altitude })
            }
            ControllerKind::PendLqr => {
                let lqr = self.design.lqr.as_ref().expect("designed with pendulum");
                let reference = if gains.lqr_feedforward {
                    let pp = &sc.pendulum.as_ref().expect("validated").params;
                    let jerk = trajectory_jerk(&sc.trajectory, pos_ref.time);
                    LqrReference::with_feedforward(
                        &pos_ref.value,
                        &pos_ref.rate,
                        &pos_ref.accel,
                        &jerk,
                        pend_ref,
                        pp,
                        g,
                    )
                } else {
                    LqrReference::from_state(SVector::<f64, 8>::from_column_slice(&[
                        pend_ref.value.x,
                        pend_ref.value.y,
                        pos_ref.value.x,
                        pos_ref.value.y,
                        pend_ref.rate.x,
                        pend_ref.rate.y,
                        pos_ref.rate.x,
                        pos_ref.rate.y,
                    ]))
                };
                let setpoint = pendulum_position_lqr(pend, quad, &reference, lqr, sc.vehicle.mass, g);
                Ok(OuterCommand { setpoint, altitude: traj_altitude })
            }
        }
    }

    fn inner(
        &self,
        quad: &QuadState,
        reference: &OutputReference,
    ) -> Result<(ControlCommand, Option<QpOutcome>), ControllerError> {
        let sc = self.scenario;
        match sc.controller {
            ControllerKind::FblRegulator => {
                let cmd = fbl_regulator(quad, &reference.value, &sc.vehicle, &self.mixer, &self.design.clf)?;
                Ok((cmd, None))
            }
            ControllerKind::ClfQp => {
                let (cmd, report) = clf_qp_controller(quad, reference, &sc.vehicle, &self.mixer, &self.design.clf)?;
                Ok((cmd, Some((report.slack, report.relaxed, report.iterations))))
            }
            _ => Ok((fbl_tracker(quad, reference, &sc.vehicle, &self.mixer, &self.design.gains)?, None)),
        }
    }

    /// `V` and `V_dot + c3 V` for the command actually applied.
    fn applied_clf(
        &self,
        quad: &QuadState,
        reference: &OutputReference,
        command: &ControlCommand,
    ) -> Result<(f64, f64), ControllerError> {
        let clf = &self.design.clf;
        let terms = fbl_terms(quad, &self.scenario.vehicle)?;
        let eta = output_error(quad, reference)?;
        let mu = terms.output_accel(command.wrench()) - reference.accel;
        let v = clf.value(&eta);
        Ok((v, clf.rate(&eta, &mu) + clf.c3 * v))
    }
}

/// Runs a scenario to completion, returning one record per step.
pub fn run_scenario(scenario: &Scenario) -> Result<SimLog, SimError> {
    let invalid = |message: String| SimError::Invalid { name: scenario.name.clone(), message };
    scenario.validate().map_err(invalid)?;
    let design = ControllerDesign::new(
        scenario.gains.clone(),
        scenario.pendulum.as_ref().map(|p| &p.params),
        scenario.vehicle.gravity,
    )
    .map_err(|e| invalid(e.to_string()))?;
    let mixer = Mixer::new(&scenario.vehicle).map_err(|e| invalid(e.to_string()))?;
    let lp = Loop { scenario, design, mixer };
    let mut differentiator = SetpointDifferentiator::new(scenario.dt);

    let steps = scenario.steps();
    let dt = scenario.dt;
    let pend_params = scenario.pendulum.as_ref().map(|p| p.params);
    let mut log = SimLog {
        scenario: scenario.name.clone(),
        controller: scenario.controller,
        dt,
        records: Vec::with_capacity(steps + 1),
        events: Vec::new(),
        vehicle: scenario.vehicle.clone(),
        pendulum_half_length: pend_params.map(|p| p.half_length),
    };
    let initial_pend = scenario.pendulum.as_ref().map_or(PendulumState::default(), |p| p.initial);
    let mut x = pack_state(&scenario.initial, &initial_pend);
    let mut noise = NoiseSource::new(scenario);
    let mut previous = ControlCommand::hover(&scenario.vehicle, &lp.mixer);
    let mut previous_setpoint = AttitudeSetpoint::new(Vector3::zeros(), scenario.vehicle.mass * scenario.vehicle.gravity, Vector3::zeros());
    let mut faults_in_row = 0usize;

    let abort = |log: SimLog, time: f64, cause: AbortCause| SimError::Aborted(Box::new(SimAbort { time, cause, log }));

    for n in 0..=steps {
        let t = n as f64 * dt;
        let (quad, pend) = unpack_state(&x);
        let pos_ref = scenario.trajectory.sample(t);
        let pend_ref = scenario
            .pendulum
            .as_ref()
            .map_or(PendulumReference::default(), |p| Loop::pendulum_reference(p, t));

        let mut fault: Option<ControllerError> = None;
        let mut clf_step = None;
        let mut relaxed = false;
        let mut clamped = false;

        let attempt = lp.outer(&quad, &pend, &pos_ref, &pend_ref).and_then(|outer| {
            let mut setpoint = outer.setpoint;
            let d = differentiator.push(setpoint.attitude);
            setpoint.rate = d.rate;
            setpoint.accel = d.accel;
            let reference = OutputReference {
                value: Vector4::new(outer.altitude[0], setpoint.attitude.x, setpoint.attitude.y, setpoint.attitude.z),
                rate: Vector4::new(outer.altitude[1], setpoint.rate.x, setpoint.rate.y, setpoint.rate.z),
                accel: Vector4::new(outer.altitude[2], setpoint.accel.x, setpoint.accel.y, setpoint.accel.z),
            };
            let (cmd, qp) = lp.inner(&quad, &reference)?;
            Ok((setpoint, reference, cmd, qp))
        });

        let (setpoint, command) = match attempt {
            Ok((setpoint, reference, raw, qp)) => {
                faults_in_row = 0;
                let violation = raw.bound_violation(&scenario.vehicle.u_min, &scenario.vehicle.u_max);
                let command = raw.clamped(&scenario.vehicle.u_min, &scenario.vehicle.u_max, &lp.mixer);
                if violation > CLAMP_REPORT_THRESHOLD {
                    clamped = true;
                    log.events.push(Event { step: n, time: t, kind: EventKind::Clamp { violation } });
                }
                if let Some((slack, was_relaxed, iterations)) = qp {
                    relaxed = was_relaxed;
                    if was_relaxed {
                        log.events.push(Event { step: n, time: t, kind: EventKind::QpRelaxed { slack } });
                    }
                    if let Ok((lyapunov, decrease_margin)) = lp.applied_clf(&quad, &reference, &command) {
                        clf_step = Some(ClfStep { lyapunov, decrease_margin, relaxed: was_relaxed, iterations });
                    }
                }
                (setpoint, command)
            }
            Err(e) => {
                faults_in_row += 1;
                log.events.push(Event { step: n, time: t, kind: EventKind::Fault { message: e.to_string() } });
                fault = Some(e);
                (previous_setpoint, previous)
            }
        };

        log.records.push(StepRecord {
            time: t,
            quad,
            pendulum: pend_params.map(|_| pend),
            command,
            setpoint,
            reference: pos_ref.value,
            pendulum_reference: pend_params.map(|_| pend_ref.value),
            clf: clf_step,
            clamped,
            relaxed,
            fault: fault.is_some(),
        });

        if let Some(e) = fault {
            if faults_in_row >= MAX_CONSECUTIVE_FAULTS {
                return Err(abort(log, t, AbortCause::TooManyFaults { count: faults_in_row, last: e }));
            }
        }
        previous = command;
        previous_setpoint = setpoint;

        if n == steps {
            break;
        }
        let step_noise = noise.sample();
        let next = match coupled_step(&x, t, dt, command.wrench(), &step_noise, &scenario.vehicle, pend_params.as_ref()) {
            Ok(next) => next,
            Err(cause) => return Err(abort(log, t, cause)),
        };
        let (next_quad, next_pend) = unpack_state(&next);
        let t_next = (n + 1) as f64 * dt;
        if let Err(e) = next_quad.validate() {
            return Err(abort(log, t_next, AbortCause::Model(e)));
        }
        if let Some(pp) = &pend_params {
            if let Err(e) = check_pendulum_margin(&next_pend, pp.half_length) {
                return Err(abort(log, t_next, AbortCause::Model(e)));
            }
        }
        x = next;
    }
    Ok(log)
}
