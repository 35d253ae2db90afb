use nalgebra::{Matrix4, Vector3, Vector4};

use super::{ModelError, VehicleParams};

/// Body wrench: collective thrust along body z plus the three axis moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    /// Collective thrust `f_z` (N).
    pub thrust: f64,
    /// Body moments `(tau_x, tau_y, tau_z)` (N m).
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self { thrust: 0.0, torque: Vector3::zeros() }
    }

    pub fn from_vector(w: &Vector4<f64>) -> Self {
        Self { thrust: w[0], torque: Vector3::new(w[1], w[2], w[3]) }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.thrust, self.torque.x, self.torque.y, self.torque.z)
    }
}

/// Linear map between the four rotor commands and the body wrench.
///
/// Cross configuration: rotors 2/4 sit on the body y axis and produce roll
/// moment, rotors 1/3 on the x axis produce pitch moment, and adjacent rotors
/// spin in opposite directions so their drag moments alternate in sign.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    forward: Matrix4<f64>,
    inverse: Matrix4<f64>,
}

impl Mixer {
    pub fn new(params: &VehicleParams) -> Result<Self, ModelError> {
        params.validate()?;
        let ct = params.thrust_coeff;
        let cq = params.torque_coeff;
        let ctl = ct * params.arm_length;
        #[rustfmt::skip]
        let forward = Matrix4::new(
            ct,  ct,  ct,   ct,
            0.0, ctl, 0.0,  -ctl,
            ctl, 0.0, -ctl, 0.0,
            cq,  -cq, cq,   -cq,
        ) * params.rotor_scale();
        let inverse = forward
            .try_inverse()
            .ok_or_else(|| ModelError::InvalidParams("mixer matrix is singular".into()))?;
        Ok(Self { forward, inverse })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.forward
    }

    pub fn inverse_matrix(&self) -> &Matrix4<f64> {
        &self.inverse
    }

    pub fn forward(&self, u: &Vector4<f64>) -> Wrench {
        Wrench::from_vector(&(self.forward * u))
    }

    /// Rotor commands producing `wrench`. Not clamped to the actuator box.
    pub fn inverse(&self, wrench: &Wrench) -> Vector4<f64> {
        self.inverse * wrench.to_vector()
    }

    /// Ratio of extreme singular values of the forward map.
    pub fn condition_number(&self) -> f64 {
        let sv = self.forward.singular_values();
        sv.max() / sv.min()
    }
}

/// Rotor commands together with the wrench they produce. The two views are
/// always consistent because the wrench is only ever derived through the mixer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    rotor: Vector4<f64>,
    wrench: Wrench,
}

impl ControlCommand {
    pub fn from_rotor(rotor: Vector4<f64>, mixer: &Mixer) -> Self {
        Self { rotor, wrench: mixer.forward(&rotor) }
    }

    pub fn from_wrench(wrench: &Wrench, mixer: &Mixer) -> Self {
        Self::from_rotor(mixer.inverse(wrench), mixer)
    }

    /// Rotor commands that hold the vehicle in level hover.
    pub fn hover(params: &VehicleParams, mixer: &Mixer) -> Self {
        Self::from_rotor(Vector4::repeat(params.hover_command()), mixer)
    }

    pub fn rotor(&self) -> &Vector4<f64> {
        &self.rotor
    }

    pub fn wrench(&self) -> &Wrench {
        &self.wrench
    }

    /// Largest amount by which any rotor command leaves `[min, max]`.
    pub fn bound_violation(&self, min: &Vector4<f64>, max: &Vector4<f64>) -> f64 {
        (0..4)
            .map(|i| (min[i] - self.rotor[i]).max(self.rotor[i] - max[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Saturates every rotor command into `[min, max]`.
    pub fn clamped(&self, min: &Vector4<f64>, max: &Vector4<f64>, mixer: &Mixer) -> Self {
        let rotor = self.rotor.zip_zip_map(min, max, |u, lo, hi| u.clamp(lo, hi));
        Self::from_rotor(rotor, mixer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_commands_produce_pure_thrust() {
        let params = VehicleParams::default();
        let mixer = Mixer::new(&params).unwrap();
        let c = 1234.5;
        let w = mixer.forward(&Vector4::repeat(c));
        assert_relative_eq!(w.thrust, 4.0 * params.rotor_scale() * params.thrust_coeff * c, epsilon = 1e-12);
        assert_eq!(w.torque, Vector3::zeros());
    }

    #[test]
    fn default_mixer_is_well_conditioned() {
        let mixer = Mixer::new(&VehicleParams::default()).unwrap();
        let cond = mixer.condition_number();
        assert!(cond.is_finite() && cond < 1e4, "{cond}");
        // rows are mutually orthogonal, so the singular values are the row norms
        assert_relative_eq!(cond, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn hover_command_lifts_weight() {
        let params = VehicleParams::default();
        let mixer = Mixer::new(&params).unwrap();
        let cmd = ControlCommand::hover(&params, &mixer);
        assert_relative_eq!(cmd.wrench().thrust, params.mass * params.gravity, epsilon = 1e-12);
    }

    #[test]
    fn clamping_reports_violation() {
        let params = VehicleParams::default();
        let mixer = Mixer::new(&params).unwrap();
        let cmd = ControlCommand::from_rotor(Vector4::new(-5.0, 10.0, params.u_max[2] + 3.0, 0.0), &mixer);
        assert_relative_eq!(cmd.bound_violation(&params.u_min, &params.u_max), 5.0);
        let clamped = cmd.clamped(&params.u_min, &params.u_max, &mixer);
        assert_eq!(clamped.bound_violation(&params.u_min, &params.u_max), 0.0);
        assert_eq!(clamped.wrench(), &mixer.forward(clamped.rotor()));
    }
}
