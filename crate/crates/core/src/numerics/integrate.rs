use nalgebra::SVector;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError<E> {
    #[error("derivative evaluation failed at t = {time}: {source}")]
    Derivative { time: f64, source: E },
    #[error("non-finite derivative at t = {time}")]
    NonFinite { time: f64 },
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMethod {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub method: StepMethod,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self { dt: 1e-3, method: StepMethod::Rk4 }
    }
}

impl StepperConfig {
    pub fn step<const N: usize, E, F>(
        &self,
        deriv: F,
        t: f64,
        x: &SVector<f64, N>,
    ) -> Result<SVector<f64, N>, IntegrationError<E>>
    where
        F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>, E>,
    {
        match self.method {
            StepMethod::Rk4 => rk4_step(deriv, t, x, self.dt),
            StepMethod::Euler => euler_step(deriv, t, x, self.dt),
        }
    }
}

fn eval<const N: usize, E, F>(
    deriv: &mut F,
    t: f64,
    x: &SVector<f64, N>,
) -> Result<SVector<f64, N>, IntegrationError<E>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>, E>,
{
    let k = deriv(t, x).map_err(|source| IntegrationError::Derivative { time: t, source })?;
    if k.iter().all(|v| v.is_finite()) {
        Ok(k)
    } else {
        Err(IntegrationError::NonFinite { time: t })
    }
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize, E, F>(
    mut deriv: F,
    t: f64,
    x: &SVector<f64, N>,
    dt: f64,
) -> Result<SVector<f64, N>, IntegrationError<E>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>, E>,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(IntegrationError::BadStep(dt));
    }
    let half = 0.5 * dt;
    let k1 = eval(&mut deriv, t, x)?;
    let k2 = eval(&mut deriv, t + half, &(x + k1 * half))?;
    let k3 = eval(&mut deriv, t + half, &(x + k2 * half))?;
    let k4 = eval(&mut deriv, t + dt, &(x + k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Explicit Euler, kept for cross-checks.
pub fn euler_step<const N: usize, E, F>(
    mut deriv: F,
    t: f64,
    x: &SVector<f64, N>,
    dt: f64,
) -> Result<SVector<f64, N>, IntegrationError<E>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>, E>,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(IntegrationError::BadStep(dt));
    }
    Ok(x + eval(&mut deriv, t, x)? * dt)
}
