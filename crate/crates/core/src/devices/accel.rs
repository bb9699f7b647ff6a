use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::BodyState;

pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

/// Specific force in the body frame, z up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccelReading {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub t_s: f64,
}

/// Quasi-static gravity projection plus independent Gaussian noise.
///
/// The angular-acceleration term is not modeled; at the rates this base moves
/// the sensor acts as a tilt sensor. Noise is drawn in x, y, z order, and is
/// drawn even when `noise_sigma` is zero so a run's random stream does not
/// depend on the noise level.
pub fn accel_sample<R: Rng + ?Sized>(
    state: &BodyState,
    gravity: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> AccelReading {
    let mut noise = || noise_sigma * rng.sample::<f64, _>(StandardNormal);
    let (nx, ny, nz) = (noise(), noise(), noise());
    AccelReading {
        ax: gravity * state.pitch_rad.sin() + nx,
        ay: gravity * state.roll_rad.sin() + ny,
        az: gravity * state.pitch_rad.cos() * state.roll_rad.cos() + nz,
        t_s: state.time_s,
    }
}
