use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::dynamics::ServoAngles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwayAxis {
    X,
    Y,
    #[default]
    Both,
}

fn default_sway_offset() -> f64 {
    PI
}

fn default_vibrate_freq() -> f64 {
    15.0
}

/// A parameterized, self-terminating actuator pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MotionPrimitive {
    /// Move both weights toward `direction_rad` (0 = +x) and hold.
    Tilt { direction_rad: f64, magnitude_rad: f64, hold_s: f64 },
    /// `α_x = A·sin(2πft)`, `α_y = A·sin(2πft + phase_offset)`.
    Sway {
        #[serde(default)]
        axis: SwayAxis,
        freq_hz: f64,
        amplitude_rad: f64,
        #[serde(default = "default_sway_offset")]
        phase_offset_rad: f64,
        duration_s: f64,
    },
    /// Square wave of ±amplitude on both servos, driven at full slew.
    Vibrate {
        amplitude_rad: f64,
        #[serde(default = "default_vibrate_freq")]
        freq_hz: f64,
        duration_s: f64,
    },
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveTag {
    #[default]
    None,
    Tilt,
    Sway,
    Vibrate,
    Stop,
}

impl MotionPrimitive {
    pub fn sway(freq_hz: f64, amplitude_rad: f64, duration_s: f64) -> Self {
        MotionPrimitive::Sway {
            axis: SwayAxis::Both,
            freq_hz,
            amplitude_rad,
            phase_offset_rad: PI,
            duration_s,
        }
    }

    pub fn tag(&self) -> PrimitiveTag {
        match self {
            MotionPrimitive::Tilt { .. } => PrimitiveTag::Tilt,
            MotionPrimitive::Sway { .. } => PrimitiveTag::Sway,
            MotionPrimitive::Vibrate { .. } => PrimitiveTag::Vibrate,
            MotionPrimitive::Stop => PrimitiveTag::Stop,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let fail = |m: String| Err(ControlError::InvalidPrimitive(m));
        let amplitude_ok = |a: f64| a.is_finite() && a.abs() <= FRAC_PI_2;
        let duration_ok = |d: f64| d.is_finite() && d >= 0.0;
        let freq_ok = |f: f64| f.is_finite() && f > 0.0;
        match *self {
            MotionPrimitive::Tilt { direction_rad, magnitude_rad, hold_s } => {
                if !direction_rad.is_finite() {
                    return fail(format!("direction_rad must be finite, got {direction_rad}"));
                }
                if !amplitude_ok(magnitude_rad) {
                    return fail(format!("magnitude_rad {magnitude_rad} outside servo range"));
                }
                if !duration_ok(hold_s) {
                    return fail(format!("hold_s must be >= 0, got {hold_s}"));
                }
            }
            MotionPrimitive::Sway { freq_hz, amplitude_rad, phase_offset_rad, duration_s, .. } => {
                if !freq_ok(freq_hz) {
                    return fail(format!("freq_hz must be > 0, got {freq_hz}"));
                }
                if !amplitude_ok(amplitude_rad) {
                    return fail(format!("amplitude_rad {amplitude_rad} outside servo range"));
                }
                if !phase_offset_rad.is_finite() {
                    return fail(format!("phase_offset_rad must be finite, got {phase_offset_rad}"));
                }
                if !duration_ok(duration_s) {
                    return fail(format!("duration_s must be >= 0, got {duration_s}"));
                }
            }
            MotionPrimitive::Vibrate { amplitude_rad, freq_hz, duration_s } => {
                if !freq_ok(freq_hz) {
                    return fail(format!("freq_hz must be > 0, got {freq_hz}"));
                }
                if !amplitude_ok(amplitude_rad) {
                    return fail(format!("amplitude_rad {amplitude_rad} outside servo range"));
                }
                if !duration_ok(duration_s) {
                    return fail(format!("duration_s must be >= 0, got {duration_s}"));
                }
            }
            MotionPrimitive::Stop => {}
        }
        Ok(())
    }

    /// Phase of a sway or vibrate pattern `elapsed_s` after it started.
    pub fn phase_at(&self, elapsed_s: f64) -> f64 {
        match self {
            MotionPrimitive::Sway { freq_hz, .. } | MotionPrimitive::Vibrate { freq_hz, .. } => {
                TAU * freq_hz * elapsed_s
            }
            _ => 0.0,
        }
    }

    /// Servo targets for the time-driven patterns at the given phase.
    pub(crate) fn pattern_targets(&self, phase: f64) -> ServoAngles {
        match *self {
            MotionPrimitive::Tilt { direction_rad, magnitude_rad, .. } => ServoAngles::new(
                magnitude_rad * direction_rad.cos(),
                magnitude_rad * direction_rad.sin(),
            ),
            MotionPrimitive::Sway { axis, amplitude_rad, phase_offset_rad, .. } => {
                let a = amplitude_rad;
                match axis {
                    SwayAxis::X => ServoAngles::new(a * phase.sin(), 0.0),
                    SwayAxis::Y => ServoAngles::new(0.0, a * phase.sin()),
                    SwayAxis::Both => {
                        ServoAngles::new(a * phase.sin(), a * (phase + phase_offset_rad).sin())
                    }
                }
            }
            MotionPrimitive::Vibrate { amplitude_rad, .. } => {
                let s = if phase.sin() >= 0.0 { amplitude_rad } else { -amplitude_rad };
                ServoAngles::new(s, s)
            }
            MotionPrimitive::Stop => ServoAngles::ZERO,
        }
    }
}
