//! The per-tick telemetry sample shared by files and wire frames.

use serde::{Deserialize, Serialize};

use crate::control::PrimitiveTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TelemetryFlags {
    pub saturation: bool,
    pub model_domain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t_s: f64,
    pub unit_id: u32,
    pub pitch_rad: f64,
    pub roll_rad: f64,
    pub pitch_rate: f64,
    pub roll_rate: f64,
    pub servo_x_rad: f64,
    pub servo_y_rad: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub active_primitive: PrimitiveTag,
    pub sync_phase_rad: f64,
    pub flags: TelemetryFlags,
}
