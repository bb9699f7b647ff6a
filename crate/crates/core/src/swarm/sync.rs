use std::f64::consts::{PI, TAU};

use super::wire::{Beacon, Endpoint, MessageBody, WireMessage};
use super::SwarmError;

pub const DEFAULT_COUPLING: f64 = 0.5;

/// Wraps to `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps to `[−π, π)`.
pub fn wrap_to_pi(angle: f64) -> f64 {
    wrap_phase(angle + PI) - PI
}

/// The lowest id leads.
pub fn elect_leader<I: IntoIterator<Item = u32>>(ids: I) -> Result<u32, SwarmError> {
    ids.into_iter().min().ok_or(SwarmError::EmptySet)
}

/// Group sway phase of one unit.
///
/// The leader broadcasts its phase once per cycle; followers pull their own
/// phase a fraction `coupling_k` of the way toward the latency-corrected
/// leader phase on every fresh beacon, so the error shrinks by `(1 − k)` per
/// received beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    pub phase_rad: f64,
    pub freq_hz: f64,
    pub coupling_k: f64,
    pub is_leader: bool,
    pub last_beacon_seq: Option<u64>,
    next_beacon_s: Option<f64>,
}

impl SyncState {
    pub fn new(freq_hz: f64, coupling_k: f64, is_leader: bool, phase_rad: f64) -> Self {
        Self {
            phase_rad: wrap_phase(phase_rad),
            freq_hz,
            coupling_k,
            is_leader,
            last_beacon_seq: None,
            next_beacon_s: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.coupling_k > 0.0 && self.coupling_k <= 1.0) {
            return Err(format!("coupling_k must be in (0, 1], got {}", self.coupling_k));
        }
        if !(self.freq_hz > 0.0) || !self.freq_hz.is_finite() {
            return Err(format!("freq_hz must be > 0, got {}", self.freq_hz));
        }
        Ok(())
    }

    pub fn advance(&mut self, dt_s: f64) {
        self.phase_rad = wrap_phase(self.phase_rad + TAU * self.freq_hz * dt_s);
    }

    /// Emits a `sync.beacon` once per cycle (leader only).
    pub fn beacon_emit(&mut self, now_s: f64, src: Endpoint, seq: u64) -> Option<WireMessage> {
        if !self.is_leader {
            return None;
        }
        let period = 1.0 / self.freq_hz;
        let due = match self.next_beacon_s {
            None => true,
            // half a microsecond of slack absorbs tick-time rounding
            Some(next) => now_s >= next - 5e-7,
        };
        if !due {
            return None;
        }
        self.next_beacon_s = Some(match self.next_beacon_s {
            Some(next) if now_s - next < period => next + period,
            _ => now_s + period,
        });
        Some(WireMessage::new(
            src,
            Endpoint::Broadcast,
            seq,
            MessageBody::SyncBeacon(Beacon { phase_rad: self.phase_rad, freq_hz: self.freq_hz }),
        ))
    }

    /// Applies a leader beacon. Returns whether the state changed; leaders,
    /// stale sequence numbers and non-beacon frames are ignored.
    pub fn sync_apply(&mut self, beacon: &WireMessage, latency_estimate_s: f64) -> bool {
        let MessageBody::SyncBeacon(b) = &beacon.body else {
            return false;
        };
        if self.is_leader || self.last_beacon_seq.is_some_and(|last| beacon.seq <= last) {
            return false;
        }
        let error = wrap_to_pi(b.phase_rad + TAU * b.freq_hz * latency_estimate_s - self.phase_rad);
        self.phase_rad = wrap_phase(self.phase_rad + self.coupling_k * error);
        self.freq_hz = b.freq_hz;
        self.last_beacon_seq = Some(beacon.seq);
        true
    }
}
