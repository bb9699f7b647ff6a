//! Wire protocol and multi-unit phase synchronization.

mod sync;
mod wire;

pub use sync::{elect_leader, wrap_phase, wrap_to_pi, SyncState, DEFAULT_COUPLING};
pub use wire::{
    decode, encode, Ack, BalanceCmd, Beacon, Endpoint, ErrorReport, Hello, MessageBody,
    MessageType, PeerRole, SetParams, WireError, WireMessage, PROTOCOL_VERSION,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwarmError {
    #[error("cannot elect a leader from an empty set")]
    EmptySet,
}
