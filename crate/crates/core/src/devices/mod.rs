//! Behavioral models of the unit's peripherals.

mod accel;
mod radio;
mod rng;
mod servo;

pub use accel::{accel_sample, AccelReading, DEFAULT_NOISE_SIGMA};
pub use radio::{radio_deliver, Delivery, RadioLink, RadioMedium, Timestamped};
pub use rng::{derive_seed, seeded_rng, SimRng};
pub use servo::{ServoState, DEFAULT_SLEW_RAD_S};
