use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearizeError {
    #[error("perturbation must be positive and finite, got {0}")]
    BadPerturbation(f64),
    #[error("non-finite sample in d f[{row}] / d {wrt}[{col}]")]
    NonFinite { row: usize, col: usize, wrt: &'static str },
}

/// Central-difference Jacobians `(df/dx, df/du)` of `f(x, u)` at `(x0, u0)`.
pub fn linearize<F>(
    f: F,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    eps: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), LinearizeError>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    if !(eps.is_finite() && eps > 0.0) {
        return Err(LinearizeError::BadPerturbation(eps));
    }
    let rows = f(x0, u0).len();
    let jac_x = jacobian(rows, x0, eps, "x", |x| f(x, u0))?;
    let jac_u = jacobian(rows, u0, eps, "u", |u| f(x0, u))?;
    Ok((jac_x, jac_u))
}

fn jacobian<G>(
    rows: usize,
    at: &DVector<f64>,
    eps: f64,
    wrt: &'static str,
    g: G,
) -> Result<DMatrix<f64>, LinearizeError>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(rows, at.len());
    for col in 0..at.len() {
        let mut plus = at.clone();
        plus[col] += eps;
        let mut minus = at.clone();
        minus[col] -= eps;
        let diff = (g(&plus) - g(&minus)) / (2.0 * eps);
        for row in 0..rows {
            if !diff[row].is_finite() {
                return Err(LinearizeError::NonFinite { row, col, wrt });
            }
            jac[(row, col)] = diff[row];
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn affine_map_is_recovered() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0, 0.0, 2.0]);
        let b = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 0.0, -1.0, 4.0]);
        let c = DVector::from_vec(vec![0.3, -0.7, 1.1]);
        let f = |x: &DVector<f64>, u: &DVector<f64>| &a * x + &b * u + &c;
        let x0 = DVector::from_vec(vec![0.2, -0.1, 0.4]);
        let u0 = DVector::from_vec(vec![1.0, -1.0]);
        let (ja, jb) = linearize(f, &x0, &u0, 1e-5).unwrap();
        assert_relative_eq!(ja, a, epsilon = 1e-9);
        assert_relative_eq!(jb, b, epsilon = 1e-9);
    }

    #[test]
    fn non_finite_entry_is_named() {
        let f = |x: &DVector<f64>, _: &DVector<f64>| DVector::from_vec(vec![x[0], (x[1] - 1.0).sqrt()]);
        let err = linearize(f, &DVector::from_vec(vec![0.0, 1.0]), &DVector::zeros(1), 1e-3).unwrap_err();
        assert_eq!(err, LinearizeError::NonFinite { row: 1, col: 1, wrt: "x" });
    }

    #[test]
    fn rejects_bad_perturbation() {
        let f = |x: &DVector<f64>, _: &DVector<f64>| x.clone();
        assert!(linearize(f, &DVector::zeros(1), &DVector::zeros(1), 0.0).is_err());
    }
}
