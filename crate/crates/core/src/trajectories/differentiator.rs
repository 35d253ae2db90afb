use nalgebra::Vector3;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub rate: Vector3<f64>,
    pub accel: Vector3<f64>,
    /// Fewer than three samples were available; `accel` is zero and `rate`
    /// is first order (or zero for the very first sample).
    pub startup: bool,
}

/// Backward finite differences over a uniformly sampled set-point stream.
///
/// Once three samples are available the rate uses the second-order backward
/// stencil `(3 x_n - 4 x_{n-1} + x_{n-2}) / 2h` and the acceleration the
/// three-point stencil `(x_n - 2 x_{n-1} + x_{n-2}) / h^2`.
#[derive(Debug, Clone)]
pub struct SetpointDifferentiator {
    dt: f64,
    history: VecDeque<Vector3<f64>>,
}

impl SetpointDifferentiator {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0 && dt.is_finite(), "differentiator step must be positive");
        Self { dt, history: VecDeque::with_capacity(3) }
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn push(&mut self, value: Vector3<f64>) -> Derivatives {
        if self.history.len() == 3 {
            self.history.pop_front();
        }
        self.history.push_back(value);
        let h = self.dt;
        match self.history.len() {
            1 => Derivatives { rate: Vector3::zeros(), accel: Vector3::zeros(), startup: true },
            2 => Derivatives {
                rate: (self.history[1] - self.history[0]) / h,
                accel: Vector3::zeros(),
                startup: true,
            },
            _ => {
                let (x2, x1, x0) = (self.history[0], self.history[1], self.history[2]);
                Derivatives {
                    rate: ((x0 - x1) * 3.0 - (x1 - x2)) / (2.0 * h),
                    accel: ((x0 - x1) - (x1 - x2)) / (h * h),
                    startup: false,
                }
            }
        }
    }
}
