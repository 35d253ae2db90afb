mod support;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::convert::Infallible;

use quadpend_core::controllers::{linearized_pendulum_model, output_error_dynamics};
use quadpend_core::models::PendulumParams;
use quadpend_core::numerics::{rk4_step, solve_care, solve_qp, CareProblem, QpProblem};
use support::oracles::{double_integrator_riccati, harmonic, qp_by_enumeration};

fn random_instance(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.random_range(1..=8);
    let k = rng.random_range(0..=12);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let a = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
    // feasible by construction: a random interior point with positive slack
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &x0 + DVector::from_fn(k, |_, _| rng.random_range(0.0..1.0));
    QpProblem::new(h, f, a, b)
}

#[test]
fn qp_agrees_with_enumeration_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut active_seen = 0;
    for case in 0..1000 {
        let p = random_instance(&mut rng);
        let sol = solve_qp(&p).unwrap_or_else(|e| panic!("case {case}: {e}"));
        let oracle = qp_by_enumeration(&p.hessian, &p.linear, &p.constraints, &p.bounds).expect("feasible");
        let err = (&sol.x - &oracle).amax();
        assert!(err < 1e-7, "case {case}: |x - x*| = {err:e}");
        assert!(p.max_violation(&sol.x) < 1e-9, "case {case}");
        // KKT: stationarity with non-negative multipliers and complementarity
        let grad = &p.hessian * &sol.x + &p.linear + p.constraints.transpose() * &sol.multipliers;
        assert!(grad.amax() < 1e-7, "case {case}: stationarity {:e}", grad.amax());
        for (i, lam) in sol.multipliers.iter().enumerate() {
            assert!(*lam >= -1e-10, "case {case}");
            let slack = p.bounds[i] - (p.constraints.row(i) * &sol.x)[0];
            assert!((lam * slack).abs() < 1e-7, "case {case}: complementarity on row {i}");
        }
        active_seen += usize::from(!sol.active.is_empty());
    }
    // the instances must actually exercise the constraints
    assert!(active_seen > 300, "{active_seen}");
}

fn check_care(problem: &CareProblem) {
    let sol = solve_care(problem).unwrap();
    let q_norm = problem.state_weight.norm();
    assert!(problem.residual(&sol.p).norm() < 1e-8 * q_norm, "residual {:e}", sol.residual);
    assert_eq!(sol.p, sol.p.transpose());
    let closed = &problem.state - &problem.input * &sol.gain;
    let abscissa = closed.complex_eigenvalues().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    assert!(abscissa < -1e-10, "{abscissa}");
}

#[test]
fn care_double_integrator_matches_closed_form() {
    for (q1, q2, r) in [(1.0, 1.0, 1.0), (10.0, 0.5, 2.0), (0.01, 3.0, 0.1)] {
        let problem = CareProblem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_diagonal(&DVector::from_column_slice(&[q1, q2])),
            DMatrix::from_element(1, 1, r),
        );
        check_care(&problem);
        let p = solve_care(&problem).unwrap().p;
        let expected = double_integrator_riccati(q1, q2, r);
        for i in 0..2 {
            for j in 0..2 {
                assert!((p[(i, j)] - expected[(i, j)]).abs() < 1e-9 * expected.norm(), "{p} vs {expected}");
            }
        }
    }
}

#[test]
fn care_on_output_error_system() {
    let (f, g) = output_error_dynamics();
    let problem = CareProblem::new(
        DMatrix::from_column_slice(8, 8, f.as_slice()),
        DMatrix::from_column_slice(8, 4, g.as_slice()),
        DMatrix::identity(8, 8),
        DMatrix::identity(4, 4),
    );
    check_care(&problem);
}

#[test]
fn care_on_linearized_pendulum_system() {
    let (a, b) = linearized_pendulum_model(&PendulumParams::default(), 9.81);
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[10.0, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]));
    let problem = CareProblem::new(
        DMatrix::from_column_slice(8, 8, a.as_slice()),
        DMatrix::from_column_slice(8, 2, b.as_slice()),
        q,
        DMatrix::from_diagonal(&DVector::from_column_slice(&[100.0, 100.0])),
    );
    check_care(&problem);
}

fn oscillator_error(dt: f64, t_end: f64) -> f64 {
    let w = 2.0;
    let deriv = |_t: f64, x: &Vector2<f64>| Ok::<_, Infallible>(Vector2::new(x.y, -w * w * x.x));
    let steps = (t_end / dt).round() as usize;
    let mut x = Vector2::new(1.0, 0.0);
    for n in 0..steps {
        x = rk4_step(deriv, n as f64 * dt, &x, dt).unwrap();
    }
    let (p, v) = harmonic(1.0, w, t_end);
    (x - Vector2::new(p, v)).norm()
}

#[test]
fn rk4_error_drops_sixteen_fold_per_halving() {
    let mut dt = 0.1;
    let mut previous = oscillator_error(dt, 10.0);
    for _ in 0..3 {
        dt /= 2.0;
        let e = oscillator_error(dt, 10.0);
        let ratio = previous / e;
        assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "dt {dt}: ratio {ratio}");
        previous = e;
    }
}
