//! Scenario files: a strict TOML schema that mirrors [`Scenario`] plus
//! metadata and an optional batch of overrides.
//!
//! ```toml
//! name = "hover"
//! controller = "fbl-tracker"
//! duration = 10.0
//! dt = 0.001
//!
//! [trajectory]
//! kind = "set-point"
//! point = [0.0, 0.0, -1.0]
//!
//! [[batch]]
//! suffix = "clf"
//! set = { controller = "clf-qp" }
//! ```

use nalgebra::{Vector2, Vector3, Vector4};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;
use toml::{Table, Value};

use quadpend_core::harness::{ControllerKind, MetricsSpec, NoiseSpec, PendulumSetup, Scenario};
use quadpend_core::models::{PendulumParams, PendulumState, QuadState, VehicleParams};
use quadpend_core::trajectories::TrajectorySpec;
use quadpend_core::TrackingGains;

pub const SCENARIO_EXTENSION: &str = "scn";

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: bad override `{spec}`: {message}")]
    Override { origin: String, spec: String, message: String },
    #[error("scenario `{name}`: {message}")]
    Invalid { name: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    #[serde(default)]
    description: String,
    controller: String,
    duration: f64,
    dt: f64,
    trajectory: TrajectoryDoc,
    #[serde(default)]
    initial: InitialDoc,
    vehicle: Option<VehicleDoc>,
    gains: Option<GainsDoc>,
    pendulum: Option<PendulumDoc>,
    noise: Option<NoiseDoc>,
    metrics: Option<MetricsDoc>,
    output: Option<OutputDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum TrajectoryDoc {
    SetPoint {
        point: [f64; 3],
    },
    Circle {
        radius: f64,
        #[serde(default = "default_circle_rate")]
        rate: f64,
        z: f64,
    },
    TakeoffThenCircle {
        radius: f64,
        #[serde(default = "default_circle_rate")]
        rate: f64,
        altitude: f64,
        climb_time: f64,
        #[serde(default = "default_blend")]
        blend_window: f64,
    },
    PendulumCircle {
        radius: f64,
        /// Angular rate (rad/s); give either this or `frequency_hz`.
        rate: Option<f64>,
        frequency_hz: Option<f64>,
    },
}

fn default_circle_rate() -> f64 {
    0.5
}

fn default_blend() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialDoc {
    position: Option<[f64; 3]>,
    velocity: Option<[f64; 3]>,
    attitude: Option<[f64; 3]>,
    body_rates: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleDoc {
    mass: Option<f64>,
    inertia: Option<[f64; 3]>,
    air_density: Option<f64>,
    rotor_diameter: Option<f64>,
    thrust_coeff: Option<f64>,
    torque_coeff: Option<f64>,
    arm_length: Option<f64>,
    u_min: Option<[f64; 4]>,
    u_max: Option<[f64; 4]>,
    gravity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsDoc {
    alpha1: Option<[f64; 4]>,
    alpha2: Option<[f64; 4]>,
    kp: Option<[f64; 3]>,
    kd: Option<[f64; 3]>,
    q_care: Option<[f64; 8]>,
    k1: Option<[f64; 2]>,
    k2: Option<[f64; 2]>,
    q_lqr: Option<[f64; 8]>,
    r_lqr: Option<[f64; 2]>,
    lqr_attitude_limit: Option<f64>,
    lqr_feedforward: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PendulumDoc {
    half_length: Option<f64>,
    mass: Option<f64>,
    #[serde(default)]
    initial: PendulumInitialDoc,
    reference: Option<TrajectoryDoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PendulumInitialDoc {
    #[serde(default)]
    a: f64,
    #[serde(default)]
    b: f64,
    #[serde(default)]
    a_dot: f64,
    #[serde(default)]
    b_dot: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum NoisePreset {
    Off,
    Standard,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseDoc {
    preset: Option<NoisePreset>,
    accel_std: Option<f64>,
    angular_std: Option<f64>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsDoc {
    tail_fraction: Option<f64>,
    settle_band: Option<f64>,
    transient_window: Option<f64>,
}

/// Time-series format written by `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    format: Option<Format>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchEntry {
    suffix: String,
    #[serde(default)]
    set: Table,
}

/// A scenario ready to run, plus the file-level output preference.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub format: Option<Format>,
}

/// One `--set key=value` override. The value is read as a TOML value and
/// falls back to a bare string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
    pub spec: String,
}

impl Override {
    pub fn parse(spec: &str) -> Result<Self, String> {
        let (key, raw) = spec.split_once('=').ok_or("expected key=value")?;
        let path: Vec<String> = key.trim().split('.').map(|s| s.trim().to_string()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(format!("malformed key `{}`", key.trim()));
        }
        let raw = raw.trim();
        let value = toml::from_str::<Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        Ok(Self { path, value, spec: spec.to_string() })
    }

    fn apply(&self, table: &mut Table) -> Result<(), String> {
        let (last, parents) = self.path.split_last().expect("non-empty path");
        let mut cursor = table;
        for key in parents {
            let entry = cursor.entry(key.clone()).or_insert_with(|| Value::Table(Table::new()));
            cursor = entry.as_table_mut().ok_or_else(|| format!("`{key}` is not a table"))?;
        }
        cursor.insert(last.clone(), self.value.clone());
        Ok(())
    }
}

fn table_overrides(origin: &str, set: &Table) -> Result<Vec<Override>, FileError> {
    fn walk(prefix: &mut Vec<String>, table: &Table, out: &mut Vec<Override>) {
        for (k, v) in table {
            prefix.push(k.clone());
            match v {
                Value::Table(t) if !t.contains_key("kind") => walk(prefix, t, out),
                _ => out.push(Override { path: prefix.clone(), value: v.clone(), spec: prefix.join(".") }),
            }
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    walk(&mut Vec::new(), set, &mut out);
    if out.is_empty() && !set.is_empty() {
        return Err(FileError::Parse { origin: origin.into(), message: "empty batch override".into() });
    }
    Ok(out)
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v)
}

impl TrajectoryDoc {
    fn into_spec(self) -> Result<TrajectorySpec, String> {
        Ok(match self {
            Self::SetPoint { point } => TrajectorySpec::SetPoint { point: vec3(point) },
            Self::Circle { radius, rate, z } => TrajectorySpec::Circle { radius, rate, z },
            Self::TakeoffThenCircle { radius, rate, altitude, climb_time, blend_window } => {
                TrajectorySpec::TakeoffThenCircle { radius, rate, altitude, climb_time, blend_window }
            }
            Self::PendulumCircle { radius, rate, frequency_hz } => match (rate, frequency_hz) {
                (Some(rate), None) => TrajectorySpec::PendulumCircle { radius, rate },
                (None, Some(hz)) => TrajectorySpec::pendulum_circle_hz(radius, hz),
                _ => return Err("pendulum-circle needs exactly one of `rate` and `frequency_hz`".into()),
            },
        })
    }
}

impl ScenarioDoc {
    fn into_loaded(self) -> Result<LoadedScenario, FileError> {
        let name = self.name.clone();
        let invalid = |message: String| FileError::Invalid { name: name.clone(), message };
        let controller: ControllerKind = self.controller.parse().map_err(invalid)?;

        let mut vehicle = VehicleParams::default();
        if let Some(v) = self.vehicle {
            let VehicleDoc {
                mass,
                inertia,
                air_density,
                rotor_diameter,
                thrust_coeff,
                torque_coeff,
                arm_length,
                u_min,
                u_max,
                gravity,
            } = v;
            let scale_changed = air_density.is_some() || rotor_diameter.is_some() || thrust_coeff.is_some();
            vehicle.mass = mass.unwrap_or(vehicle.mass);
            vehicle.inertia = inertia.map(vec3).unwrap_or(vehicle.inertia);
            vehicle.air_density = air_density.unwrap_or(vehicle.air_density);
            vehicle.rotor_diameter = rotor_diameter.unwrap_or(vehicle.rotor_diameter);
            vehicle.thrust_coeff = thrust_coeff.unwrap_or(vehicle.thrust_coeff);
            vehicle.torque_coeff = torque_coeff.unwrap_or(vehicle.torque_coeff);
            vehicle.arm_length = arm_length.unwrap_or(vehicle.arm_length);
            vehicle.gravity = gravity.unwrap_or(vehicle.gravity);
            if u_max.is_none() && (scale_changed || mass.is_some() || gravity.is_some()) {
                // keep the default headroom: each rotor alone can lift the vehicle
                vehicle.u_max = Vector4::repeat(4.0 * vehicle.hover_command());
            }
            vehicle.u_min = u_min.map(Vector4::from).unwrap_or(vehicle.u_min);
            vehicle.u_max = u_max.map(Vector4::from).unwrap_or(vehicle.u_max);
        }

        let mut gains = TrackingGains::default();
        if let Some(g) = self.gains {
            if let Some(v) = g.alpha1 {
                gains.alpha1 = Vector4::from(v);
            }
            if let Some(v) = g.alpha2 {
                gains.alpha2 = Vector4::from(v);
            }
            if let Some(v) = g.kp {
                gains.kp = vec3(v);
            }
            if let Some(v) = g.kd {
                gains.kd = vec3(v);
            }
            if let Some(v) = g.q_care {
                gains.q_care = v.into();
            }
            if let Some(v) = g.k1 {
                gains.k1 = Vector2::from(v);
            }
            if let Some(v) = g.k2 {
                gains.k2 = Vector2::from(v);
            }
            if let Some(v) = g.q_lqr {
                gains.q_lqr = v.into();
            }
            if let Some(v) = g.r_lqr {
                gains.r_lqr = Vector2::from(v);
            }
            gains.lqr_attitude_limit = g.lqr_attitude_limit.unwrap_or(gains.lqr_attitude_limit);
            gains.lqr_feedforward = g.lqr_feedforward.unwrap_or(gains.lqr_feedforward);
        }

        let pendulum = match self.pendulum {
            None => None,
            Some(p) => {
                let defaults = PendulumParams::default();
                let params = PendulumParams {
                    half_length: p.half_length.unwrap_or(defaults.half_length),
                    mass: p.mass.unwrap_or(defaults.mass),
                };
                let i = p.initial;
                let reference = match p.reference {
                    Some(r) => r.into_spec().map_err(|m| invalid(format!("pendulum reference: {m}")))?,
                    None => PendulumSetup::default().reference,
                };
                Some(PendulumSetup {
                    params,
                    initial: PendulumState { a: i.a, b: i.b, a_dot: i.a_dot, b_dot: i.b_dot },
                    reference,
                })
            }
        };

        let noise = match self.noise {
            None => NoiseSpec::off(),
            Some(n) => {
                let base = match n.preset.unwrap_or(NoisePreset::Off) {
                    NoisePreset::Off => NoiseSpec::off(),
                    NoisePreset::Standard => NoiseSpec::standard(n.seed),
                };
                NoiseSpec {
                    accel_std: n.accel_std.unwrap_or(base.accel_std),
                    angular_std: n.angular_std.unwrap_or(base.angular_std),
                    seed: n.seed,
                }
            }
        };

        let mut metrics = MetricsSpec::default();
        if let Some(m) = self.metrics {
            metrics.tail_fraction = m.tail_fraction.unwrap_or(metrics.tail_fraction);
            metrics.settle_band = m.settle_band.unwrap_or(metrics.settle_band);
            metrics.transient_window = m.transient_window.unwrap_or(metrics.transient_window);
        }

        let i = self.initial;
        let zero = [0.0; 3];
        let initial = QuadState {
            position: vec3(i.position.unwrap_or(zero)),
            velocity: vec3(i.velocity.unwrap_or(zero)),
            attitude: vec3(i.attitude.unwrap_or(zero)),
            body_rates: vec3(i.body_rates.unwrap_or(zero)),
        };

        let scenario = Scenario {
            name: self.name,
            description: self.description,
            vehicle,
            gains,
            controller,
            trajectory: self.trajectory.into_spec().map_err(|m| invalid(format!("trajectory: {m}")))?,
            pendulum,
            initial,
            duration: self.duration,
            dt: self.dt,
            noise,
            metrics,
        };
        scenario.validate().map_err(invalid)?;
        Ok(LoadedScenario { scenario, format: self.output.and_then(|o| o.format) })
    }
}

/// Renders a TOML error. Unknown keys inside a tagged table are reported by
/// the parser at the table header, so the message is pointed at the line
/// that defines the key instead.
fn describe(err: &toml::de::Error, text: &str) -> String {
    let fallback = || err.to_string().trim_end().to_string();
    let message = err.message();
    let Some(key) = message.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) else {
        return fallback();
    };
    let Some(span) = err.span() else { return fallback() };
    let first = text[..span.start.min(text.len())].matches('\n').count();
    let defines = |line: &str| {
        let line = line.trim_start();
        let rest = line.strip_prefix(key).or_else(|| line.strip_prefix(&format!("\"{key}\"")));
        rest.is_some_and(|r| r.trim_start().starts_with('='))
    };
    match text.lines().enumerate().skip(first).find(|(_, l)| defines(l)) {
        Some((n, line)) => format!("line {}: {message}\n  | {}", n + 1, line.trim_end()),
        None => fallback(),
    }
}

/// Parses a scenario document, expands its batch section and applies the
/// command-line overrides to every member. Each member is validated.
pub fn parse_scenarios(text: &str, origin: &str, overrides: &[Override]) -> Result<Vec<LoadedScenario>, FileError> {
    let parse_err = |message: String| FileError::Parse { origin: origin.to_string(), message };
    let mut root: Table = toml::from_str(text).map_err(|e| parse_err(e.to_string().trim_end().to_string()))?;
    let batch = match root.remove("batch") {
        None => Vec::new(),
        Some(v) => {
            let entries: Vec<BatchEntry> =
                v.try_into().map_err(|e: toml::de::Error| parse_err(format!("batch: {}", e.message())))?;
            entries
        }
    };

    let mut members: Vec<(Option<String>, Table)> = Vec::new();
    if batch.is_empty() {
        members.push((None, root));
    } else {
        let mut seen = BTreeMap::new();
        for entry in batch {
            if seen.insert(entry.suffix.clone(), ()).is_some() {
                return Err(parse_err(format!("duplicate batch suffix `{}`", entry.suffix)));
            }
            let mut table = root.clone();
            for o in table_overrides(origin, &entry.set)? {
                o.apply(&mut table).map_err(|m| FileError::Override {
                    origin: origin.into(),
                    spec: o.spec.clone(),
                    message: m,
                })?;
            }
            members.push((Some(entry.suffix), table));
        }
    }

    let mut out = Vec::with_capacity(members.len());
    for (suffix, mut table) in members {
        for o in overrides {
            o.apply(&mut table).map_err(|m| FileError::Override {
                origin: origin.into(),
                spec: o.spec.clone(),
                message: m,
            })?;
        }
        if let Some(suffix) = &suffix {
            if let Some(Value::String(name)) = table.get_mut("name") {
                *name = format!("{name}-{suffix}");
            }
        }
        // round-trip through text so unknown keys are reported with a line
        let rendered = toml::to_string(&table).map_err(|e| parse_err(e.to_string()))?;
        let member_origin = match &suffix {
            Some(s) => format!("{origin} [batch {s}]"),
            None => origin.to_string(),
        };
        let source = if suffix.is_none() && overrides.is_empty() { text } else { &rendered };
        let doc: ScenarioDoc = toml::from_str(source)
            .map_err(|e| FileError::Parse { origin: member_origin, message: describe(&e, source) })?;
        out.push(doc.into_loaded()?);
    }
    Ok(out)
}

pub fn load_scenarios(path: &Path, overrides: &[Override]) -> Result<Vec<LoadedScenario>, FileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| FileError::Io { path: path.display().to_string(), source })?;
    parse_scenarios(&text, &path.display().to_string(), overrides)
}
