//! Simulation core for a self-righting, weight-shifting spherical base.
//!
//! A unit is a roly-poly shell with a low heavy mass and two servo-driven
//! arms carrying small weights. Swinging the arms moves the composite center
//! of mass and tilts the shell. This crate holds the pieces needed to emulate
//! a fleet of such units:
//!
//! * [`dynamics`]: composite center of mass, restoring torque and a fixed-step
//!   RK4 integrator for the two tilt axes.
//! * [`devices`]: slew-limited servos, a noisy accelerometer and a lossy
//!   broadcast radio, all driven by one seeded RNG per run.
//! * [`control`]: the posture balancer and the motion primitive scheduler.
//! * [`swarm`]: the line-framed wire protocol and leader/follower phase sync.
//! * [`plant`] and [`telemetry`]: glue types shared with the harness.
//!
//! ```
//! use koboshi::dynamics::{composite_com, equilibrium_tilt, DeviceParams, PayloadSpec, ServoAngles};
//!
//! let params = DeviceParams::default();
//! let com = composite_com(&params, &PayloadSpec::default(), ServoAngles::new(0.5, 0.0)).unwrap();
//! let (pitch, roll) = equilibrium_tilt(&com).unwrap();
//! assert!(pitch > 0.0 && roll == 0.0);
//! ```

pub mod control;
pub mod devices;
pub mod dynamics;
pub mod plant;
pub mod swarm;
pub mod telemetry;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/devices.md")]
    mod devices {}
    #[doc = include_str!("../../../book/src/balance.md")]
    mod balance {}
    #[doc = include_str!("../../../book/src/primitives.md")]
    mod primitives {}
    #[doc = include_str!("../../../book/src/swarm.md")]
    mod swarm {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
}
