use nalgebra::{Matrix3, SVector, Vector3, Vector4};

use super::{ModelError, Wrench};

/// Flat 12-component quadrotor state `[p, v, q, omega]`.
pub type QuadVector = SVector<f64, 12>;

/// Physical parameters of the vehicle and its rotors.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// Mass (kg).
    pub mass: f64,
    /// Principal moments of inertia `(I_xx, I_yy, I_zz)` (kg m^2).
    pub inertia: Vector3<f64>,
    /// Air density (kg/m^3).
    pub air_density: f64,
    /// Rotor diameter (m).
    pub rotor_diameter: f64,
    pub thrust_coeff: f64,
    pub torque_coeff: f64,
    /// Arm length (m).
    pub arm_length: f64,
    pub u_min: Vector4<f64>,
    pub u_max: Vector4<f64>,
    /// Gravitational acceleration, acting along +Z (m/s^2).
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let mass = 1.0;
        let air_density = 1.225;
        let rotor_diameter: f64 = 0.2;
        let thrust_coeff = 0.1;
        let gravity = 9.81;
        // each rotor alone can lift the whole vehicle
        let u_max = 4.0 * mass * gravity / (4.0 * air_density * rotor_diameter.powi(4) * thrust_coeff);
        Self {
            mass,
            inertia: Vector3::new(0.01, 0.01, 0.02),
            air_density,
            rotor_diameter,
            thrust_coeff,
            torque_coeff: 0.01,
            arm_length: 0.17,
            u_min: Vector4::zeros(),
            u_max: Vector4::repeat(u_max),
            gravity,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("mass", self.mass),
            ("inertia.xx", self.inertia.x),
            ("inertia.yy", self.inertia.y),
            ("inertia.zz", self.inertia.z),
            ("air_density", self.air_density),
            ("rotor_diameter", self.rotor_diameter),
            ("thrust_coeff", self.thrust_coeff),
            ("arm_length", self.arm_length),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.torque_coeff.is_finite() || self.torque_coeff == 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "torque_coeff must be finite and non-zero, got {}",
                self.torque_coeff
            )));
        }
        if !self.gravity.is_finite() || self.gravity < 0.0 {
            return Err(ModelError::InvalidParams(format!("gravity must be non-negative, got {}", self.gravity)));
        }
        for i in 0..4 {
            if !(self.u_min[i].is_finite() && self.u_max[i].is_finite() && self.u_min[i] < self.u_max[i]) {
                return Err(ModelError::InvalidParams(format!(
                    "rotor {} bounds must satisfy u_min < u_max, got [{}, {}]",
                    i + 1,
                    self.u_min[i],
                    self.u_max[i]
                )));
            }
        }
        Ok(())
    }

    /// Common rotor scale `rho * D^4`.
    pub fn rotor_scale(&self) -> f64 {
        self.air_density * self.rotor_diameter.powi(4)
    }

    /// Per-rotor command that makes collective thrust equal to weight.
    pub fn hover_command(&self) -> f64 {
        self.mass * self.gravity / (4.0 * self.rotor_scale() * self.thrust_coeff)
    }
}

/// Rigid-body state of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    /// World-frame position (m).
    pub position: Vector3<f64>,
    /// World-frame velocity (m/s).
    pub velocity: Vector3<f64>,
    /// Z-Y-X Euler angles `(phi, theta, psi)` (rad).
    pub attitude: Vector3<f64>,
    /// Body angular velocity (rad/s).
    pub body_rates: Vector3<f64>,
}

impl QuadState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: Vector3::zeros(),
            body_rates: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> QuadVector {
        let mut x = QuadVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(6).copy_from(&self.attitude);
        x.fixed_rows_mut::<3>(9).copy_from(&self.body_rates);
        x
    }

    pub fn from_vector(x: &QuadVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(0).into_owned(),
            velocity: x.fixed_rows::<3>(3).into_owned(),
            attitude: x.fixed_rows::<3>(6).into_owned(),
            body_rates: x.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let parts = [
            ("position", &self.position),
            ("velocity", &self.velocity),
            ("attitude", &self.attitude),
            ("body_rates", &self.body_rates),
        ];
        for (name, part) in parts {
            if part.iter().any(|c| !c.is_finite()) {
                return Err(ModelError::NonFinite(name));
            }
        }
        check_pitch(self.attitude.y)
    }

    pub fn roll(&self) -> f64 {
        self.attitude.x
    }

    pub fn pitch(&self) -> f64 {
        self.attitude.y
    }

    pub fn yaw(&self) -> f64 {
        self.attitude.z
    }
}

fn check_pitch(theta: f64) -> Result<(), ModelError> {
    // cos(theta) stays strictly positive inside the chart
    if theta.abs() < std::f64::consts::FRAC_PI_2 && theta.cos() > 0.0 {
        Ok(())
    } else {
        Err(ModelError::SingularAttitude { theta })
    }
}

/// Direction in which collective thrust accelerates the vehicle, scaled by
/// `1/m`: `-R(q) e_z / m`.
pub fn gravity_direction_map(q: &Vector3<f64>, mass: f64) -> Vector3<f64> {
    let (sphi, cphi) = q.x.sin_cos();
    let (stheta, ctheta) = q.y.sin_cos();
    let (spsi, cpsi) = q.z.sin_cos();
    -Vector3::new(
        sphi * spsi + cphi * stheta * cpsi,
        -sphi * cpsi + cphi * stheta * spsi,
        cphi * ctheta,
    ) / mass
}

/// Map from body rates to Euler-angle rates, `q_dot = Z(q) omega`.
pub fn euler_rate_matrix(q: &Vector3<f64>) -> Result<Matrix3<f64>, ModelError> {
    check_pitch(q.y)?;
    let (sphi, cphi) = q.x.sin_cos();
    let (stheta, ctheta) = q.y.sin_cos();
    let ttheta = stheta / ctheta;
    #[rustfmt::skip]
    let z = Matrix3::new(
        1.0, sphi * ttheta,   cphi * ttheta,
        0.0, cphi,            -sphi,
        0.0, sphi / ctheta,   cphi / ctheta,
    );
    Ok(z)
}

/// Time derivative of `Z(q)` given the Euler-angle rates `q_dot`.
pub fn euler_rate_matrix_dot(q: &Vector3<f64>, q_dot: &Vector3<f64>) -> Result<Matrix3<f64>, ModelError> {
    check_pitch(q.y)?;
    let (sphi, cphi) = q.x.sin_cos();
    let (stheta, ctheta) = q.y.sin_cos();
    let ttheta = stheta / ctheta;
    let sec = 1.0 / ctheta;
    let sec2 = sec * sec;
    #[rustfmt::skip]
    let d_phi = Matrix3::new(
        0.0, cphi * ttheta,  -sphi * ttheta,
        0.0, -sphi,          -cphi,
        0.0, cphi * sec,     -sphi * sec,
    );
    #[rustfmt::skip]
    let d_theta = Matrix3::new(
        0.0, sphi * sec2,            cphi * sec2,
        0.0, 0.0,                    0.0,
        0.0, sphi * ttheta * sec,    cphi * ttheta * sec,
    );
    Ok(d_phi * q_dot.x + d_theta * q_dot.y)
}

/// Rigid-body state derivative `[p_dot, v_dot, q_dot, omega_dot]`.
pub fn quad_derivative(
    state: &QuadState,
    wrench: &Wrench,
    params: &VehicleParams,
) -> Result<QuadVector, ModelError> {
    let z = euler_rate_matrix(&state.attitude)?;
    let inertia = &params.inertia;
    let w = &state.body_rates;

    let accel = Vector3::new(0.0, 0.0, params.gravity)
        + gravity_direction_map(&state.attitude, params.mass) * wrench.thrust;
    let attitude_rate = z * w;
    let gyro = inertia.component_mul(w).cross(w);
    let omega_dot = (gyro + wrench.torque).component_div(inertia);

    let mut dx = QuadVector::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&state.velocity);
    dx.fixed_rows_mut::<3>(3).copy_from(&accel);
    dx.fixed_rows_mut::<3>(6).copy_from(&attitude_rate);
    dx.fixed_rows_mut::<3>(9).copy_from(&omega_dot);
    Ok(dx)
}
