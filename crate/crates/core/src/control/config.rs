use serde::{Deserialize, Serialize};

use super::ControlError;

/// Dead-band balancer tuning.
///
/// The balancer engages when the filtered reading on an axis leaves
/// `±band_ms2` and disengages once it falls below `band_ms2 * reengage_ratio`
/// or changes sign. While engaged it moves the servo by `step_rad`, but only
/// after the filtered reading has stayed within `settle_range_ms2` for
/// `settle_ticks` ticks, and at most once every `dwell_ticks` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub band_ms2: f64,
    pub reengage_ratio: f64,
    pub step_rad: f64,
    pub tick_hz: f64,
    /// Exponential smoothing gain applied to raw readings, in (0, 1].
    pub filter_gain: f64,
    pub settle_ticks: u32,
    pub settle_range_ms2: f64,
    pub dwell_ticks: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            band_ms2: 0.3,
            reengage_ratio: 0.5,
            step_rad: 2f64.to_radians(),
            tick_hz: 50.0,
            filter_gain: 0.25,
            settle_ticks: 10,
            settle_range_ms2: 0.05,
            dwell_ticks: 5,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let mut problems = Vec::new();
        if !(self.band_ms2 > 0.0) {
            problems.push(format!("band_ms2 must be > 0, got {}", self.band_ms2));
        }
        if !(self.reengage_ratio > 0.0 && self.reengage_ratio < 1.0) {
            problems.push(format!("reengage_ratio must be in (0, 1), got {}", self.reengage_ratio));
        }
        if !(self.step_rad > 0.0) {
            problems.push(format!("step_rad must be > 0, got {}", self.step_rad));
        }
        if !(self.tick_hz > 0.0) || !self.tick_hz.is_finite() {
            problems.push(format!("tick_hz must be > 0, got {}", self.tick_hz));
        }
        if !(self.filter_gain > 0.0 && self.filter_gain <= 1.0) {
            problems.push(format!("filter_gain must be in (0, 1], got {}", self.filter_gain));
        }
        if self.settle_ticks == 0 {
            problems.push("settle_ticks must be >= 1".to_string());
        }
        if !(self.settle_range_ms2 > 0.0) {
            problems.push(format!("settle_range_ms2 must be > 0, got {}", self.settle_range_ms2));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ControlError::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.tick_hz
    }
}

/// Partial override of a [`ControllerConfig`]; absent fields keep their value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfigPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_ms2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reengage_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tick_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle_ticks: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle_range_ms2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dwell_ticks: Option<u32>,
}

impl ControllerConfigPatch {
    pub fn apply(&self, base: ControllerConfig) -> ControllerConfig {
        ControllerConfig {
            band_ms2: self.band_ms2.unwrap_or(base.band_ms2),
            reengage_ratio: self.reengage_ratio.unwrap_or(base.reengage_ratio),
            step_rad: self.step_rad.unwrap_or(base.step_rad),
            tick_hz: self.tick_hz.unwrap_or(base.tick_hz),
            filter_gain: self.filter_gain.unwrap_or(base.filter_gain),
            settle_ticks: self.settle_ticks.unwrap_or(base.settle_ticks),
            settle_range_ms2: self.settle_range_ms2.unwrap_or(base.settle_range_ms2),
            dwell_ticks: self.dwell_ticks.unwrap_or(base.dwell_ticks),
        }
    }
}
