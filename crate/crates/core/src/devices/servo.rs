use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

/// 300°/s.
pub const DEFAULT_SLEW_RAD_S: f64 = 300.0 * std::f64::consts::PI / 180.0;

/// A position servo that tracks its target at a bounded angular speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoState {
    pub angle_rad: f64,
    pub target_rad: f64,
    pub slew_limit_rad_s: f64,
    pub min_rad: f64,
    pub max_rad: f64,
}

impl Default for ServoState {
    fn default() -> Self {
        Self {
            angle_rad: 0.0,
            target_rad: 0.0,
            slew_limit_rad_s: DEFAULT_SLEW_RAD_S,
            min_rad: -FRAC_PI_2,
            max_rad: FRAC_PI_2,
        }
    }
}

impl ServoState {
    /// Servo parked at `angle_rad` (clamped to the default range).
    pub fn at(angle_rad: f64) -> Self {
        let mut s = Self::default();
        s.angle_rad = s.clamp(angle_rad);
        s.target_rad = s.angle_rad;
        s
    }

    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.min_rad, self.max_rad)
    }

    pub fn set_target(&mut self, target_rad: f64) {
        self.target_rad = self.clamp(target_rad);
    }

    pub fn at_limit(&self) -> bool {
        self.angle_rad <= self.min_rad || self.angle_rad >= self.max_rad
    }

    pub fn at_target(&self) -> bool {
        (self.angle_rad - self.target_rad).abs() <= 1e-9
    }

    /// One tick of rate-limited tracking.
    pub fn update(mut self, dt_s: f64) -> Self {
        let max_move = self.slew_limit_rad_s * dt_s;
        let delta = (self.target_rad - self.angle_rad).clamp(-max_move, max_move);
        self.angle_rad = self.clamp(self.angle_rad + delta);
        self
    }
}
