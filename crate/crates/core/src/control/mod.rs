//! Posture balancing, motion primitives, and the arbitration between them.
//!
//! Balancing runs whenever it is enabled and no primitive is active. Any
//! primitive overrides it; when the queue drains the balancer restarts from
//! fresh filter state.

mod balance;
mod config;
mod primitive;
mod scheduler;

pub use balance::{compensable, BalanceController, BalanceOutput, Compensable};
pub use config::{ControllerConfig, ControllerConfigPatch};
pub use primitive::{MotionPrimitive, PrimitiveTag, SwayAxis};
pub use scheduler::{ActivePrimitive, PrimitiveOutput, Scheduler, DEFAULT_QUEUE_CAPACITY};

use thiserror::Error;

use crate::devices::{AccelReading, ServoState};
use crate::dynamics::ServoAngles;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("primitive queue is full ({capacity} pending)")]
    QueueFull { capacity: usize },
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// New servo targets, or `None` to leave the servos where they are headed.
    pub targets: Option<ServoAngles>,
    /// Per-axis saturation warning from the balancer.
    pub saturation: [bool; 2],
    pub active: PrimitiveTag,
}

/// Per-unit control stack run once per control tick.
#[derive(Debug, Clone)]
pub struct Controller {
    pub config: ControllerConfig,
    pub scheduler: Scheduler,
    balance: BalanceController,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Self {
        Self { config, scheduler: Scheduler::default(), balance: BalanceController::default() }
    }

    pub fn tick(
        &mut self,
        t_s: f64,
        reading: &AccelReading,
        servos: [&ServoState; 2],
        sync_phase: Option<f64>,
    ) -> ControlOutput {
        if let Some(out) = self.scheduler.tick(t_s, servos, sync_phase) {
            self.balance.reset();
            return ControlOutput {
                targets: Some(out.targets),
                saturation: [false; 2],
                active: out.tag,
            };
        }
        if !self.scheduler.balance_enabled {
            return ControlOutput { targets: None, saturation: [false; 2], active: PrimitiveTag::None };
        }
        let out = self.balance.tick(reading, servos, &self.config);
        ControlOutput {
            targets: Some(out.targets),
            saturation: out.saturation,
            active: PrimitiveTag::None,
        }
    }

    pub fn set_balance(&mut self, enabled: bool) {
        if enabled != self.scheduler.balance_enabled {
            self.balance.reset();
        }
        self.scheduler.balance_enabled = enabled;
    }
}
