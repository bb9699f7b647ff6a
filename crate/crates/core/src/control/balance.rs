use std::collections::VecDeque;

use crate::devices::{AccelReading, ServoState};
use crate::dynamics::{DeviceParams, PayloadSpec, ServoAngles};

use super::ControllerConfig;

/// Whether the weight moment on each axis can cancel the payload moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compensable {
    pub x: bool,
    pub y: bool,
}

impl Compensable {
    pub fn both(&self) -> bool {
        self.x && self.y
    }
}

pub fn compensable(params: &DeviceParams, payload: &PayloadSpec) -> Compensable {
    let capacity = params.weight_mass_kg * params.arm_length_m;
    let [px, py, _] = payload.offset_m;
    Compensable {
        x: capacity >= payload.mass_kg * px.abs(),
        y: capacity >= payload.mass_kg * py.abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceOutput {
    pub targets: ServoAngles,
    /// Set while an axis is out of band with its servo pinned at the limit.
    pub saturation: [bool; 2],
}

#[derive(Debug, Clone, Default)]
struct AxisLoop {
    filtered: Option<f64>,
    recent: VecDeque<f64>,
    /// Sign of the reading that engaged the current correction.
    engaged: Option<f64>,
    cooldown: u32,
}

impl AxisLoop {
    fn tick(&mut self, raw: f64, servo: &ServoState, cfg: &ControllerConfig) -> (f64, bool) {
        let f = match self.filtered {
            Some(prev) => prev + cfg.filter_gain * (raw - prev),
            None => raw,
        };
        self.filtered = Some(f);
        self.recent.push_back(f);
        while self.recent.len() > cfg.settle_ticks as usize {
            self.recent.pop_front();
        }

        if self.engaged.is_none() && f.abs() > cfg.band_ms2 {
            self.engaged = Some(f.signum());
        }
        if let Some(sign) = self.engaged {
            if f.abs() < cfg.band_ms2 * cfg.reengage_ratio || f.signum() != sign {
                self.engaged = None;
            }
        }
        self.cooldown = self.cooldown.saturating_sub(1);

        let mut target = servo.target_rad;
        let mut saturated = false;
        if let Some(sign) = self.engaged {
            let pinned = if sign > 0.0 {
                servo.angle_rad <= servo.min_rad
            } else {
                servo.angle_rad >= servo.max_rad
            };
            saturated = pinned && f.abs() > cfg.band_ms2;
            if self.cooldown == 0 && !pinned && self.settled(cfg) {
                target = servo.clamp(servo.angle_rad - sign * cfg.step_rad);
                self.cooldown = cfg.dwell_ticks;
            }
        }
        (target, saturated)
    }

    fn settled(&self, cfg: &ControllerConfig) -> bool {
        if self.recent.len() < cfg.settle_ticks as usize {
            return false;
        }
        let (lo, hi) = self
            .recent
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo < cfg.settle_range_ms2
    }
}

/// Dead-band posture balancer with hysteresis, one loop per axis.
///
/// A positive x reading means the base pitched toward +x, so the x weight is
/// stepped toward −x; likewise for y.
#[derive(Debug, Clone, Default)]
pub struct BalanceController {
    x: AxisLoop,
    y: AxisLoop,
}

impl BalanceController {
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn filtered(&self) -> (Option<f64>, Option<f64>) {
        (self.x.filtered, self.y.filtered)
    }

    pub fn tick(
        &mut self,
        reading: &AccelReading,
        servos: [&ServoState; 2],
        cfg: &ControllerConfig,
    ) -> BalanceOutput {
        let (tx, sx) = self.x.tick(reading.ax, servos[0], cfg);
        let (ty, sy) = self.y.tick(reading.ay, servos[1], cfg);
        BalanceOutput { targets: ServoAngles::new(tx, ty), saturation: [sx, sy] }
    }
}
