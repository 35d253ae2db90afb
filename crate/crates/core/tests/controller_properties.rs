mod support;

use nalgebra::{Vector2, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadpend_core::controllers::{
    clf_qp_controller, fbl_regulator, fbl_tracker, output_error, pendulum_fbl_xi, pendulum_virtual_input,
    ControllerDesign, OutputReference, PendulumReference, TrackingGains,
};
use quadpend_core::models::{
    pendulum_drift, pendulum_input_matrix, quad_derivative, ControlCommand, Mixer, PendulumParams, PendulumState,
    QuadState, VehicleParams,
};
use quadpend_core::numerics::rk4_step;
use support::oracles::{critically_damped_error, min_norm_kkt};

const G: f64 = 9.81;

/// Closes the loop with a zero-order hold on the command and returns the
/// state at every sample.
fn simulate<F>(initial: QuadState, params: &VehicleParams, dt: f64, duration: f64, mut control: F) -> Vec<QuadState>
where
    F: FnMut(&QuadState) -> ControlCommand,
{
    let steps = (duration / dt).round() as usize;
    let mut x = initial.to_vector();
    let mut out = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        let state = QuadState::from_vector(&x);
        out.push(state);
        if n == steps {
            break;
        }
        let cmd = control(&state);
        let deriv = |_t: f64, x: &_| quad_derivative(&QuadState::from_vector(x), cmd.wrench(), params);
        x = rk4_step(deriv, n as f64 * dt, &x, dt).unwrap();
    }
    out
}

#[test]
fn xi_is_the_minimum_norm_solution_of_the_pendulum_constraint() {
    let pp = PendulumParams::default();
    let gains = TrackingGains::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000 {
        let s = PendulumState {
            a: rng.random_range(-0.3..0.3),
            b: rng.random_range(-0.3..0.3),
            a_dot: rng.random_range(-1.0..1.0),
            b_dot: rng.random_range(-1.0..1.0),
        };
        let r = PendulumReference {
            value: Vector2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)),
            rate: Vector2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            accel: Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        };
        let xi = pendulum_fbl_xi(&s, &r, &pp, &gains, G).unwrap();
        let nu = pendulum_virtual_input(&s, &r, &gains);
        let target = nu - pendulum_drift(&s, pp.half_length, G).unwrap();
        let bp = pendulum_input_matrix(s.a, s.b, pp.half_length).unwrap();
        let scale = target.amax().max(1.0);
        assert!((bp * xi - target).amax() < 1e-9 * scale, "case {case}: constraint");
        let oracle = min_norm_kkt(&bp, &target);
        assert!((xi - oracle).amax() < 1e-8 * oracle.amax().max(1.0), "case {case}: {xi} vs {oracle}");
    }
}

#[test]
fn tracker_error_follows_critically_damped_response() {
    let params = VehicleParams::default();
    let mixer = Mixer::new(&params).unwrap();
    let gains = TrackingGains::default();
    // alpha2^2 = 4 alpha1 on every channel
    assert_eq!(gains.alpha2[0] * gains.alpha2[0], 4.0 * gains.alpha1[0]);
    let reference = OutputReference::set_point(Vector4::new(-1.0, 0.0, 0.0, 0.0));
    let mut initial = QuadState::at_rest(Vector3::new(0.0, 0.0, -0.9));
    initial.attitude.x = 0.1;
    let dt = 1e-3;
    let log = simulate(initial, &params, dt, 2.0, |s| fbl_tracker(s, &reference, &params, &mixer, &gains).unwrap());
    for (n, s) in log.iter().enumerate() {
        let t = n as f64 * dt;
        let expected = critically_damped_error(0.1, gains.alpha1[0], t);
        assert!((s.position.z + 1.0 - expected).abs() < 2e-3 * 0.1, "z at t = {t}");
        assert!((s.attitude.x - expected).abs() < 2e-3 * 0.1, "phi at t = {t}");
    }
}

/// The Riccati regulator on each output channel is `e_ddot = -e - sqrt(3) e_dot`.
fn regulator_oracle(e0: f64, t: f64) -> f64 {
    let sigma = 3f64.sqrt() / 2.0;
    let omega = 0.5;
    e0 * (-sigma * t).exp() * ((omega * t).cos() + sigma / omega * (omega * t).sin())
}

#[test]
fn regulator_matches_its_error_dynamics_and_decreases_lyapunov_function() {
    let params = VehicleParams::default();
    let mixer = Mixer::new(&params).unwrap();
    let design = ControllerDesign::new(TrackingGains::default(), None, G).unwrap();
    let target = Vector4::new(-1.0, 0.0, 0.0, 0.0);
    let mut initial = QuadState::at_rest(Vector3::new(0.0, 0.0, -0.8));
    initial.attitude = Vector3::new(0.05, -0.05, 0.1);
    let dt = 1e-3;
    let log = simulate(initial, &params, dt, 12.0, |s| fbl_regulator(s, &target, &params, &mixer, &design.clf).unwrap());
    let reference = OutputReference::set_point(target);
    let mut previous = f64::INFINITY;
    let mut settled_at = None;
    for (n, s) in log.iter().enumerate() {
        let t = n as f64 * dt;
        let expected = regulator_oracle(0.2, t);
        assert!((s.position.z + 1.0 - expected).abs() < 1e-4, "t = {t}");
        assert!((s.attitude.z - regulator_oracle(0.1, t)).abs() < 1e-4, "t = {t}");
        let v = design.clf.value(&output_error(s, &reference).unwrap());
        assert!(v <= previous * (-design.clf.c3 * dt).exp() + 1e-12, "V rose at t = {t}");
        previous = v;
        if (s.position.z + 1.0).abs() > 0.02 * 0.2 {
            settled_at = None;
        } else if settled_at.is_none() {
            settled_at = Some(t);
        }
    }
    // 2% settling of the underdamped pair, from the oracle's envelope
    let sigma = 3f64.sqrt() / 2.0;
    let envelope = ((1.0 + (sigma / 0.5f64).powi(2)).sqrt() / 0.02).ln() / sigma;
    let ts = settled_at.expect("settles");
    assert!(ts <= envelope, "settled at {ts}, envelope bound {envelope}");
}

#[test]
fn clf_qp_keeps_the_decrease_condition_from_an_offset() {
    let params = VehicleParams::default();
    let mixer = Mixer::new(&params).unwrap();
    let design = ControllerDesign::new(TrackingGains::default(), None, G).unwrap();
    let reference = OutputReference::set_point(Vector4::new(-1.0, 0.0, 0.0, 0.0));
    let mut initial = QuadState::at_rest(Vector3::new(0.0, 0.0, -0.7));
    initial.attitude = Vector3::new(0.1, 0.05, -0.2);
    let dt = 1e-3;
    let mut worst = f64::NEG_INFINITY;
    let log = simulate(initial, &params, dt, 5.0, |s| {
        let (cmd, report) = clf_qp_controller(s, &reference, &params, &mixer, &design.clf).unwrap();
        worst = worst.max(report.decrease_margin);
        cmd
    });
    assert!(worst <= 1e-6, "V_dot + c3 V reached {worst}");
    let v0 = design.clf.value(&output_error(&log[0], &reference).unwrap());
    let v_end = design.clf.value(&output_error(log.last().unwrap(), &reference).unwrap());
    assert!(v_end <= v0 * (-design.clf.c3 * 5.0).exp() * 1.01, "{v_end} vs {v0}");
}
