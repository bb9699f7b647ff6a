//! One simulated unit: body, payload and both servos, advanced together.

use crate::devices::ServoState;
use crate::dynamics::{
    composite_com, step, BodyState, ComResult, DeviceParams, DynamicsError, PayloadSpec,
    ServoAngles,
};

#[derive(Debug, Clone)]
pub struct Plant {
    pub params: DeviceParams,
    pub payload: PayloadSpec,
    pub state: BodyState,
    pub servos: [ServoState; 2],
    /// Latched once the body tips past the modeled range; the body then
    /// stays frozen at its last valid state while time keeps running.
    pub domain_exceeded: bool,
}

impl Plant {
    pub fn new(params: DeviceParams, payload: PayloadSpec, state: BodyState, servo: ServoAngles) -> Self {
        Self {
            params,
            payload,
            state,
            servos: [ServoState::at(servo.x), ServoState::at(servo.y)],
            domain_exceeded: !state.in_domain(),
        }
    }

    pub fn servo_angles(&self) -> ServoAngles {
        ServoAngles::new(self.servos[0].angle_rad, self.servos[1].angle_rad)
    }

    pub fn set_targets(&mut self, targets: ServoAngles) {
        self.servos[0].set_target(targets.x);
        self.servos[1].set_target(targets.y);
    }

    pub fn com(&self) -> Result<ComResult, DynamicsError> {
        composite_com(&self.params, &self.payload, self.servo_angles())
    }

    /// Runs `substeps` physics steps of `dt_s`; servos slew first in each.
    pub fn advance(&mut self, dt_s: f64, substeps: u32) -> Result<(), DynamicsError> {
        for _ in 0..substeps {
            self.servos = self.servos.map(|s| s.update(dt_s));
            if self.domain_exceeded {
                self.state.time_s += dt_s;
                continue;
            }
            match step(&self.state, &self.params, &self.payload, self.servo_angles(), dt_s) {
                Ok(next) => self.state = next,
                Err(e @ DynamicsError::ModelDomainExceeded { .. }) => {
                    self.domain_exceeded = true;
                    self.state.time_s += dt_s;
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}
