//! Tilt dynamics of a spherical-bottom base carrying two orthogonal pendulum
//! weights and an arbitrary payload.
//!
//! All positions are measured from the center of the sphere cap, z up. The
//! x-axis weight swings in the x–z plane and moves the composite center of
//! mass along x, which drives the pitch angle; the y-axis weight does the
//! same for roll. The two tilt axes are integrated independently.
//!
//! Per axis, with lateral offset `ℓ`, depth `r_g` (positive below the
//! sphere center) and total mass `M`:
//!
//! ```text
//! U(θ)  = M·g·(R − r_g·cos θ − ℓ·sin θ)
//! τ(θ)  = −dU/dθ = −M·g·(r_g·sin θ − ℓ·cos θ)
//! I_eff·θ̈ = τ(θ) − c·θ̇,      I_eff = I_s + M·r_g²
//! ```

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("total mass is zero")]
    ZeroMass,
    #[error("composite center of mass is not below the sphere center (depth {depth_m} m)")]
    NotSelfRighting { depth_m: f64 },
    #[error("tilt left the modeled range (pitch {pitch_rad} rad, roll {roll_rad} rad)")]
    ModelDomainExceeded { pitch_rad: f64, roll_rad: f64 },
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("invalid time step {0}")]
    InvalidStep(f64),
}

/// Geometry and mass model of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub base_radius_m: f64,
    pub shell_mass_kg: f64,
    /// Shell center of mass below the sphere center (positive = below).
    pub shell_com_depth_m: f64,
    /// Servo pivot height relative to the sphere center, `[x arm, y arm]`.
    pub arm_pivot_height_m: [f64; 2],
    pub arm_length_m: f64,
    /// Mass of each of the two weights.
    pub weight_mass_kg: f64,
    /// Top plate height above the sphere center.
    pub plate_height_m: f64,
    /// Viscous rolling damping, N·m·s/rad.
    pub damping_coeff: f64,
    /// Body inertia about the contact roll axis, excluding the `M·r_g²` term.
    pub inertia_body: f64,
    pub gravity: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            base_radius_m: 0.06,
            shell_mass_kg: 0.15,
            shell_com_depth_m: 0.02,
            arm_pivot_height_m: [0.0, 0.0],
            arm_length_m: 0.03,
            weight_mass_kg: 0.020,
            plate_height_m: 0.04,
            damping_coeff: 2e-3,
            inertia_body: 2e-4,
            gravity: 9.81,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let mut problems = Vec::new();
        let finite = [
            self.base_radius_m,
            self.shell_mass_kg,
            self.shell_com_depth_m,
            self.arm_pivot_height_m[0],
            self.arm_pivot_height_m[1],
            self.arm_length_m,
            self.weight_mass_kg,
            self.plate_height_m,
            self.damping_coeff,
            self.inertia_body,
            self.gravity,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            problems.push("all parameters must be finite".to_string());
        }
        if !(self.base_radius_m > 0.0) {
            problems.push(format!("base_radius_m must be > 0, got {}", self.base_radius_m));
        }
        for (name, m) in [
            ("shell_mass_kg", self.shell_mass_kg),
            ("weight_mass_kg", self.weight_mass_kg),
        ] {
            if m < 0.0 {
                problems.push(format!("{name} must be >= 0, got {m}"));
            }
        }
        if self.arm_length_m < 0.0 {
            problems.push(format!("arm_length_m must be >= 0, got {}", self.arm_length_m));
        }
        if self.arm_length_m > self.base_radius_m {
            problems.push(format!(
                "arm_length_m {} exceeds base_radius_m {}",
                self.arm_length_m, self.base_radius_m
            ));
        }
        if self.damping_coeff < 0.0 {
            problems.push(format!("damping_coeff must be >= 0, got {}", self.damping_coeff));
        }
        if self.inertia_body < 0.0 {
            problems.push(format!("inertia_body must be >= 0, got {}", self.inertia_body));
        }
        if !(self.gravity > 0.0) {
            problems.push(format!("gravity must be > 0, got {}", self.gravity));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DynamicsError::InvalidParams(problems.join("; ")))
        }
    }
}

/// Partial override of [`DeviceParams`]; absent fields keep their value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParamsPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_radius_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shell_mass_kg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shell_com_depth_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm_pivot_height_m: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm_length_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_mass_kg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plate_height_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping_coeff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inertia_body: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gravity: Option<f64>,
}

impl DeviceParamsPatch {
    pub fn apply(&self, base: DeviceParams) -> DeviceParams {
        DeviceParams {
            base_radius_m: self.base_radius_m.unwrap_or(base.base_radius_m),
            shell_mass_kg: self.shell_mass_kg.unwrap_or(base.shell_mass_kg),
            shell_com_depth_m: self.shell_com_depth_m.unwrap_or(base.shell_com_depth_m),
            arm_pivot_height_m: self.arm_pivot_height_m.unwrap_or(base.arm_pivot_height_m),
            arm_length_m: self.arm_length_m.unwrap_or(base.arm_length_m),
            weight_mass_kg: self.weight_mass_kg.unwrap_or(base.weight_mass_kg),
            plate_height_m: self.plate_height_m.unwrap_or(base.plate_height_m),
            damping_coeff: self.damping_coeff.unwrap_or(base.damping_coeff),
            inertia_body: self.inertia_body.unwrap_or(base.inertia_body),
            gravity: self.gravity.unwrap_or(base.gravity),
        }
    }
}

/// An object resting on the top plate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSpec {
    pub mass_kg: f64,
    /// Payload center of mass relative to the top-plate center, z up.
    #[serde(default)]
    pub offset_m: [f64; 3],
}

impl PayloadSpec {
    pub fn new(mass_kg: f64, offset_m: [f64; 3]) -> Self {
        Self { mass_kg, offset_m }
    }
}

/// Tilt angles and rates of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyState {
    /// Tilt about the body y-axis, driven by the x-axis weight.
    pub pitch_rad: f64,
    /// Tilt about the body x-axis, driven by the y-axis weight.
    pub roll_rad: f64,
    pub pitch_rate: f64,
    pub roll_rate: f64,
    pub time_s: f64,
}

impl BodyState {
    pub fn at_rest(pitch_rad: f64, roll_rad: f64) -> Self {
        Self { pitch_rad, roll_rad, ..Self::default() }
    }

    pub fn in_domain(&self) -> bool {
        self.pitch_rad.abs() < FRAC_PI_2 && self.roll_rad.abs() < FRAC_PI_2
    }
}

/// Servo arm angles, 0 = arm hanging straight down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoAngles {
    pub x: f64,
    pub y: f64,
}

impl ServoAngles {
    pub const ZERO: ServoAngles = ServoAngles { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Pitch, driven by the x-axis weight.
    X,
    /// Roll, driven by the y-axis weight.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComResult {
    pub lateral_x_m: f64,
    pub lateral_y_m: f64,
    /// Depth of the composite center of mass below the sphere center.
    pub depth_m: f64,
    pub total_mass_kg: f64,
}

impl ComResult {
    pub fn lateral(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.lateral_x_m,
            Axis::Y => self.lateral_y_m,
        }
    }

    pub fn effective_inertia(&self, params: &DeviceParams) -> f64 {
        params.inertia_body + self.total_mass_kg * self.depth_m * self.depth_m
    }
}

pub fn composite_com(
    params: &DeviceParams,
    payload: &PayloadSpec,
    servo: ServoAngles,
) -> Result<ComResult, DynamicsError> {
    let la = params.arm_length_m;
    let mw = params.weight_mass_kg;
    let [px, py, pz] = payload.offset_m;

    // (mass, x, y, z)
    let parts = [
        (params.shell_mass_kg, 0.0, 0.0, -params.shell_com_depth_m),
        (
            mw,
            la * servo.x.sin(),
            0.0,
            params.arm_pivot_height_m[0] - la * servo.x.cos(),
        ),
        (
            mw,
            0.0,
            la * servo.y.sin(),
            params.arm_pivot_height_m[1] - la * servo.y.cos(),
        ),
        (payload.mass_kg, px, py, params.plate_height_m + pz),
    ];

    let total: f64 = parts.iter().map(|p| p.0).sum();
    if total <= 0.0 {
        return Err(DynamicsError::ZeroMass);
    }
    let (mx, my, mz) = parts
        .iter()
        .fold((0.0, 0.0, 0.0), |(ax, ay, az), &(m, x, y, z)| {
            (ax + m * x, ay + m * y, az + m * z)
        });
    Ok(ComResult {
        lateral_x_m: mx / total,
        lateral_y_m: my / total,
        depth_m: -mz / total,
        total_mass_kg: total,
    })
}

/// Static resting tilt `(pitch, roll)` for a given composite center of mass.
pub fn equilibrium_tilt(com: &ComResult) -> Result<(f64, f64), DynamicsError> {
    if !(com.depth_m > 0.0) {
        return Err(DynamicsError::NotSelfRighting { depth_m: com.depth_m });
    }
    Ok((
        (com.lateral_x_m / com.depth_m).atan(),
        (com.lateral_y_m / com.depth_m).atan(),
    ))
}

pub fn potential_energy(com: &ComResult, tilt_rad: f64, axis: Axis, params: &DeviceParams) -> f64 {
    com.total_mass_kg
        * params.gravity
        * (params.base_radius_m - com.depth_m * tilt_rad.cos() - com.lateral(axis) * tilt_rad.sin())
}

pub fn restoring_torque(com: &ComResult, tilt_rad: f64, axis: Axis, gravity: f64) -> f64 {
    -com.total_mass_kg
        * gravity
        * (com.depth_m * tilt_rad.sin() - com.lateral(axis) * tilt_rad.cos())
}

/// Total mechanical energy relative to the upright rest configuration.
///
/// `E = ½·I_eff·(θ̇² + φ̇²) + [U_x(θ) − U_x(0)] + [U_y(φ) − U_y(0)]`, where
/// each `U` is the single-axis potential with that axis' lateral offset.
/// The `M·g·R` constant cancels, leaving
/// `U(θ) − U(0) = M·g·(r_g·(1 − cos θ) − ℓ·sin θ)` per axis.
pub fn total_energy(state: &BodyState, com: &ComResult, params: &DeviceParams) -> f64 {
    let inertia = com.effective_inertia(params);
    let kinetic = 0.5 * inertia * (state.pitch_rate.powi(2) + state.roll_rate.powi(2));
    let mg = com.total_mass_kg * params.gravity;
    let axis_potential =
        |tilt: f64, lateral: f64| mg * (com.depth_m * (1.0 - tilt.cos()) - lateral * tilt.sin());
    kinetic
        + axis_potential(state.pitch_rad, com.lateral_x_m)
        + axis_potential(state.roll_rad, com.lateral_y_m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfRighting {
    pub self_righting: bool,
    /// Smallest composite depth over the servo range.
    pub margin_m: f64,
}

/// Self-righting check at the worst-case servo angles.
///
/// Raising either arm toward ±π/2 lifts its weight, so the minimum depth over
/// the servo range is attained at one of the four corner pairs.
pub fn is_self_righting(params: &DeviceParams, payload: &PayloadSpec) -> SelfRighting {
    let corners = [FRAC_PI_2, -FRAC_PI_2];
    let mut margin = f64::INFINITY;
    for &ax in &corners {
        for &ay in &corners {
            match composite_com(params, payload, ServoAngles::new(ax, ay)) {
                Ok(com) => margin = margin.min(com.depth_m),
                Err(_) => {
                    return SelfRighting { self_righting: false, margin_m: 0.0 };
                }
            }
        }
    }
    SelfRighting { self_righting: margin > 0.0, margin_m: margin }
}

fn axis_rk4(tilt: f64, rate: f64, dt: f64, accel: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let k1 = (rate, accel(tilt, rate));
    let k2 = (
        rate + 0.5 * dt * k1.1,
        accel(tilt + 0.5 * dt * k1.0, rate + 0.5 * dt * k1.1),
    );
    let k3 = (
        rate + 0.5 * dt * k2.1,
        accel(tilt + 0.5 * dt * k2.0, rate + 0.5 * dt * k2.1),
    );
    let k4 = (rate + dt * k3.1, accel(tilt + dt * k3.0, rate + dt * k3.1));
    (
        tilt + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        rate + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Advances both tilt axes by one RK4 step with the servo angles held fixed.
pub fn step(
    state: &BodyState,
    params: &DeviceParams,
    payload: &PayloadSpec,
    servo: ServoAngles,
    dt_s: f64,
) -> Result<BodyState, DynamicsError> {
    if !(dt_s > 0.0) || !dt_s.is_finite() {
        return Err(DynamicsError::InvalidStep(dt_s));
    }
    if !state.in_domain() {
        return Err(DynamicsError::ModelDomainExceeded {
            pitch_rad: state.pitch_rad,
            roll_rad: state.roll_rad,
        });
    }
    let com = composite_com(params, payload, servo)?;
    let com = &com;
    let inertia = com.effective_inertia(params);
    let c = params.damping_coeff;
    let g = params.gravity;

    let (pitch, pitch_rate) = axis_rk4(state.pitch_rad, state.pitch_rate, dt_s, |th, w| {
        (restoring_torque(com, th, Axis::X, g) - c * w) / inertia
    });
    let (roll, roll_rate) = axis_rk4(state.roll_rad, state.roll_rate, dt_s, |th, w| {
        (restoring_torque(com, th, Axis::Y, g) - c * w) / inertia
    });

    let next = BodyState {
        pitch_rad: pitch,
        roll_rad: roll,
        pitch_rate,
        roll_rate,
        time_s: state.time_s + dt_s,
    };
    if !next.in_domain() || !next.pitch_rad.is_finite() || !next.roll_rad.is_finite() {
        return Err(DynamicsError::ModelDomainExceeded {
            pitch_rad: next.pitch_rad,
            roll_rad: next.roll_rad,
        });
    }
    Ok(next)
}
