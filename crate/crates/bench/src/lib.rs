//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector, Vector3};

use quadpend_core::models::{PendulumParams, QuadState};
use quadpend_core::numerics::{CareProblem, QpProblem};
use quadpend_core::{ControllerKind, PendulumSetup, Scenario, TrajectorySpec};

/// Strictly convex QP with `k` inequality rows and a known interior point.
/// Entries come from a fixed linear congruential sequence so runs compare.
pub fn qp_instance(n: usize, k: usize) -> QpProblem {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = move || {
        state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let l = DMatrix::from_fn(n, n, |_, _| next());
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| 5.0 * next());
    let a = DMatrix::from_fn(k, n, |_, _| next());
    let x0 = DVector::from_fn(n, |_, _| next());
    let b = &a * &x0 + DVector::from_fn(k, |_, _| 0.5 * (next() + 1.0));
    QpProblem::new(h, f, a, b)
}

/// Double integrators stacked `channels` times.
pub fn chain_care(channels: usize) -> CareProblem {
    let n = 2 * channels;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, channels);
    for c in 0..channels {
        a[(2 * c, 2 * c + 1)] = 1.0;
        b[(2 * c + 1, c)] = 1.0;
    }
    CareProblem::new(a, b, DMatrix::identity(n, n), DMatrix::identity(channels, channels))
}

pub fn circle(controller: ControllerKind, duration: f64) -> Scenario {
    Scenario {
        controller,
        duration,
        trajectory: TrajectorySpec::Circle { radius: 1.0, rate: 0.5, z: -1.0 },
        initial: QuadState::at_rest(Vector3::new(1.0, 0.0, -1.0)),
        ..Scenario::hover("circle")
    }
}

pub fn balance(controller: ControllerKind, duration: f64) -> Scenario {
    let mut setup = PendulumSetup { params: PendulumParams::default(), ..PendulumSetup::default() };
    setup.initial.a = 0.1;
    setup.initial.b = -0.05;
    Scenario {
        controller,
        duration,
        pendulum: Some(setup),
        trajectory: TrajectorySpec::SetPoint { point: Vector3::new(0.0, 0.0, -1.0) },
        initial: QuadState::at_rest(Vector3::new(0.0, 0.0, -1.0)),
        ..Scenario::hover("balance")
    }
}
