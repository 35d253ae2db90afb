//! Independent reference computations used by the integration tests. None of
//! these call into the solver code they are checked against.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Vector2, Vector3};

/// Strictly convex QP `min 1/2 x'Hx + f'x  s.t.  Ax <= b` by brute force:
/// every working set of at most `n` rows gives a stationary point of the
/// equality-constrained problem; the optimum is the feasible one with the
/// smallest objective.
pub fn qp_by_enumeration(h: &DMatrix<f64>, f: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = f.len();
    let k = b.len();
    let tol = 1e-9 * (1.0 + b.amax());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << k) {
        let rows: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let m = rows.len();
        if m > n {
            continue;
        }
        let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
        let mut rhs = DVector::<f64>::zeros(n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for i in 0..n {
            rhs[i] = -f[i];
        }
        for (j, &r) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = a[(r, c)];
                kkt[(c, n + j)] = a[(r, c)];
            }
            rhs[n + j] = b[r];
        }
        let lu = kkt.lu();
        let Some(sol) = lu.solve(&rhs) else { continue };
        if !sol.iter().all(|v| v.is_finite()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        if k > 0 && (a * &x - b).max() > tol {
            continue;
        }
        let obj = 0.5 * x.dot(&(h * &x)) + f.dot(&x);
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Minimum-norm solution of `B x = r` from the KKT system of
/// `min |x|^2 s.t. B x = r`.
pub fn min_norm_kkt(bp: &Matrix2x3<f64>, r: &Vector2<f64>) -> Vector3<f64> {
    let mut kkt = DMatrix::<f64>::zeros(5, 5);
    for i in 0..3 {
        kkt[(i, i)] = 2.0;
    }
    for i in 0..2 {
        for j in 0..3 {
            kkt[(3 + i, j)] = bp[(i, j)];
            kkt[(j, 3 + i)] = bp[(i, j)];
        }
    }
    let rhs = DVector::from_column_slice(&[0.0, 0.0, 0.0, r.x, r.y]);
    let sol = kkt.lu().solve(&rhs).expect("full row rank");
    Vector3::new(sol[0], sol[1], sol[2])
}

/// Stabilizing Riccati solution for the scalar double integrator
/// `x_ddot = u` with `Q = diag(q1, q2)` and input weight `r`.
pub fn double_integrator_riccati(q1: f64, q2: f64, r: f64) -> Matrix2<f64> {
    let p12 = (q1 * r).sqrt();
    let p22 = (r * (2.0 * p12 + q2)).sqrt();
    let p11 = p12 * p22 / r;
    Matrix2::new(p11, p12, p12, p22)
}

/// Error of `e_ddot + k2 e_dot + k1 e = 0` from `e(0) = e0`, `e_dot(0) = 0`,
/// for the critically damped case `k2^2 = 4 k1`.
pub fn critically_damped_error(e0: f64, k1: f64, t: f64) -> f64 {
    let w = k1.sqrt();
    e0 * (1.0 + w * t) * (-w * t).exp()
}

/// Exact harmonic oscillator `x_ddot = -w^2 x` from `(x0, 0)`.
pub fn harmonic(x0: f64, w: f64, t: f64) -> (f64, f64) {
    (x0 * (w * t).cos(), -x0 * w * (w * t).sin())
}

/// Central-difference Jacobian of `f` at `x`.
pub fn jacobian<F>(f: F, x: &DVector<f64>, m: usize, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}
