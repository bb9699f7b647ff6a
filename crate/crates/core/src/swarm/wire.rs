//! Line-framed text codec.
//!
//! Every frame is a single JSON object on one line with exactly the
//! top-level keys `v`, `type`, `src`, `dst`, `seq` and `payload`:
//!
//! ```text
//! {"v":1,"type":"cmd.primitive","src":"console","dst":1,"seq":7,"payload":{"kind":"stop"}}
//! ```
//!
//! Unknown keys inside `payload` are ignored; unknown top-level keys make the
//! frame malformed.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::control::{ControllerConfigPatch, MotionPrimitive};
use crate::dynamics::{DeviceParamsPatch, PayloadSpec};
use crate::telemetry::TelemetryRecord;

pub const PROTOCOL_VERSION: u32 = 1;

const FRAME_KEYS: [&str; 6] = ["v", "type", "src", "dst", "seq", "payload"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("protocol version {got} not supported (expected {PROTOCOL_VERSION})")]
    VersionMismatch { got: u64 },
}

impl WireError {
    /// Short machine-readable code used in error frames.
    pub fn code(&self) -> &'static str {
        match self {
            WireError::MalformedFrame(_) => "MalformedFrame",
            WireError::UnknownType(_) => "UnknownType",
            WireError::VersionMismatch { .. } => "VersionMismatch",
        }
    }
}

/// Sender or addressee of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Unit(u32),
    /// An operator console.
    Console,
    /// The simulation host itself (answers handshakes, reports frame errors).
    Host,
    /// `"*"`: every unit.
    Broadcast,
}

impl Endpoint {
    pub fn accepts(&self, unit: u32) -> bool {
        matches!(self, Endpoint::Broadcast) || *self == Endpoint::Unit(unit)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Unit(id) => write!(f, "{id}"),
            Endpoint::Console => f.write_str("console"),
            Endpoint::Host => f.write_str("host"),
            Endpoint::Broadcast => f.write_str("*"),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Endpoint::Unit(id) => s.serialize_u32(*id),
            Endpoint::Console => s.serialize_str("console"),
            Endpoint::Host => s.serialize_str("host"),
            Endpoint::Broadcast => s.serialize_str("*"),
        }
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct EndpointVisitor;
        impl Visitor<'_> for EndpointVisitor {
            type Value = Endpoint;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a unit id, \"console\", \"host\" or \"*\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Endpoint, E> {
                u32::try_from(v).map(Endpoint::Unit).map_err(|_| E::custom("unit id out of range"))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Endpoint, E> {
                u32::try_from(v).map(Endpoint::Unit).map_err(|_| E::custom("unit id out of range"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Endpoint, E> {
                match v {
                    "console" => Ok(Endpoint::Console),
                    "host" => Ok(Endpoint::Host),
                    "*" => Ok(Endpoint::Broadcast),
                    other => Err(E::custom(format!("unknown endpoint {other:?}"))),
                }
            }
        }
        d.deserialize_any(EndpointVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Hello,
    Ack,
    Error,
    CmdPrimitive,
    CmdSetParams,
    CmdBalance,
    Telemetry,
    SyncBeacon,
}

impl MessageType {
    pub const ALL: [MessageType; 8] = [
        MessageType::Hello,
        MessageType::Ack,
        MessageType::Error,
        MessageType::CmdPrimitive,
        MessageType::CmdSetParams,
        MessageType::CmdBalance,
        MessageType::Telemetry,
        MessageType::SyncBeacon,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MessageType::Hello => "hello",
            MessageType::Ack => "ack",
            MessageType::Error => "error",
            MessageType::CmdPrimitive => "cmd.primitive",
            MessageType::CmdSetParams => "cmd.set_params",
            MessageType::CmdBalance => "cmd.balance",
            MessageType::Telemetry => "telemetry",
            MessageType::SyncBeacon => "sync.beacon",
        }
    }

    pub fn is_command(&self) -> bool {
        matches!(
            self,
            MessageType::CmdPrimitive | MessageType::CmdSetParams | MessageType::CmdBalance
        )
    }
}

impl FromStr for MessageType {
    type Err = WireError;
    fn from_str(s: &str) -> Result<Self, WireError> {
        MessageType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| WireError::UnknownType(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeerRole {
    Console,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub role: PeerRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    /// Sequence number of the frame being acknowledged.
    pub ack_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SetParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<PayloadSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<DeviceParamsPatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfigPatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceCmd {
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub phase_rad: f64,
    pub freq_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Hello(Hello),
    Ack(Ack),
    Error(ErrorReport),
    CmdPrimitive(MotionPrimitive),
    CmdSetParams(SetParams),
    CmdBalance(BalanceCmd),
    Telemetry(TelemetryRecord),
    SyncBeacon(Beacon),
}

impl MessageBody {
    pub fn message_type(&self) -> MessageType {
        match self {
            MessageBody::Hello(_) => MessageType::Hello,
            MessageBody::Ack(_) => MessageType::Ack,
            MessageBody::Error(_) => MessageType::Error,
            MessageBody::CmdPrimitive(_) => MessageType::CmdPrimitive,
            MessageBody::CmdSetParams(_) => MessageType::CmdSetParams,
            MessageBody::CmdBalance(_) => MessageType::CmdBalance,
            MessageBody::Telemetry(_) => MessageType::Telemetry,
            MessageBody::SyncBeacon(_) => MessageType::SyncBeacon,
        }
    }

    fn from_value(ty: MessageType, v: Value) -> Result<Self, serde_json::Error> {
        Ok(match ty {
            MessageType::Hello => MessageBody::Hello(serde_json::from_value(v)?),
            MessageType::Ack => MessageBody::Ack(serde_json::from_value(v)?),
            MessageType::Error => MessageBody::Error(serde_json::from_value(v)?),
            MessageType::CmdPrimitive => MessageBody::CmdPrimitive(serde_json::from_value(v)?),
            MessageType::CmdSetParams => MessageBody::CmdSetParams(serde_json::from_value(v)?),
            MessageType::CmdBalance => MessageBody::CmdBalance(serde_json::from_value(v)?),
            MessageType::Telemetry => MessageBody::Telemetry(serde_json::from_value(v)?),
            MessageType::SyncBeacon => MessageBody::SyncBeacon(serde_json::from_value(v)?),
        })
    }
}

/// Serializes as the bare payload object; the type travels in the frame.
impl Serialize for MessageBody {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MessageBody::Hello(p) => p.serialize(s),
            MessageBody::Ack(p) => p.serialize(s),
            MessageBody::Error(p) => p.serialize(s),
            MessageBody::CmdPrimitive(p) => p.serialize(s),
            MessageBody::CmdSetParams(p) => p.serialize(s),
            MessageBody::CmdBalance(p) => p.serialize(s),
            MessageBody::Telemetry(p) => p.serialize(s),
            MessageBody::SyncBeacon(p) => p.serialize(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub version: u32,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub seq: u64,
    pub body: MessageBody,
}

impl WireMessage {
    pub fn new(src: Endpoint, dst: Endpoint, seq: u64, body: MessageBody) -> Self {
        Self { version: PROTOCOL_VERSION, src, dst, seq, body }
    }

    pub fn message_type(&self) -> MessageType {
        self.body.message_type()
    }

    /// The frame as one line of text, without the terminator.
    pub fn to_line(&self) -> String {
        #[derive(Serialize)]
        struct Frame<'a> {
            v: u32,
            #[serde(rename = "type")]
            ty: &'static str,
            src: &'a Endpoint,
            dst: &'a Endpoint,
            seq: u64,
            payload: &'a MessageBody,
        }
        let frame = Frame {
            v: self.version,
            ty: self.message_type().as_str(),
            src: &self.src,
            dst: &self.dst,
            seq: self.seq,
            payload: &self.body,
        };
        serde_json::to_string(&frame).expect("frame serializes")
    }
}

/// Encodes one frame, newline terminated.
pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut line = msg.to_line().into_bytes();
    line.push(b'\n');
    line
}

pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let malformed = |m: String| WireError::MalformedFrame(m);
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(format!("not UTF-8: {e}")))?;
    let text = text.strip_suffix('\n').unwrap_or(text);
    let text = text.strip_suffix('\r').unwrap_or(text);
    if text.contains('\n') {
        return Err(malformed("more than one line".into()));
    }
    let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(malformed("frame is not an object".into()));
    };
    if let Some(extra) = map.keys().find(|k| !FRAME_KEYS.contains(&k.as_str())) {
        return Err(malformed(format!("unknown top-level key {extra:?}")));
    }

    let version = take(&mut map, "v")?
        .as_u64()
        .ok_or_else(|| malformed("\"v\" must be a non-negative integer".into()))?;
    if version != u64::from(PROTOCOL_VERSION) {
        return Err(WireError::VersionMismatch { got: version });
    }
    let ty: MessageType = match take(&mut map, "type")? {
        Value::String(s) => s.parse()?,
        _ => return Err(malformed("\"type\" must be a string".into())),
    };
    let src: Endpoint = serde_json::from_value(take(&mut map, "src")?)
        .map_err(|e| malformed(format!("src: {e}")))?;
    let dst: Endpoint = serde_json::from_value(take(&mut map, "dst")?)
        .map_err(|e| malformed(format!("dst: {e}")))?;
    let seq = take(&mut map, "seq")?
        .as_u64()
        .ok_or_else(|| malformed("\"seq\" must be a non-negative integer".into()))?;
    let payload = take(&mut map, "payload")?;
    if !payload.is_object() {
        return Err(malformed("\"payload\" must be an object".into()));
    }
    let body = MessageBody::from_value(ty, payload)
        .map_err(|e| malformed(format!("{} payload: {e}", ty.as_str())))?;
    Ok(WireMessage { version: PROTOCOL_VERSION, src, dst, seq, body })
}

fn take(map: &mut Map<String, Value>, key: &str) -> Result<Value, WireError> {
    map.remove(key)
        .ok_or_else(|| WireError::MalformedFrame(format!("missing key {key:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stop_frame() -> WireMessage {
        WireMessage::new(
            Endpoint::Console,
            Endpoint::Unit(1),
            7,
            MessageBody::CmdPrimitive(MotionPrimitive::Stop),
        )
    }

    #[test]
    fn line_layout() {
        assert_eq!(
            stop_frame().to_line(),
            r#"{"v":1,"type":"cmd.primitive","src":"console","dst":1,"seq":7,"payload":{"kind":"stop"}}"#
        );
    }

    #[test]
    fn round_trip() {
        let m = stop_frame();
        assert_eq!(decode(&encode(&m)).unwrap(), m);
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(decode(b"xyz"), Err(WireError::MalformedFrame(_))));
        assert!(matches!(decode(&[0xff, 0xfe]), Err(WireError::MalformedFrame(_))));
        assert!(matches!(decode(b"[1,2]"), Err(WireError::MalformedFrame(_))));
    }

    #[test]
    fn unknown_type() {
        let f = br#"{"v":1,"type":"cmd.dance","src":"console","dst":"*","seq":1,"payload":{}}"#;
        assert_eq!(decode(f), Err(WireError::UnknownType("cmd.dance".into())));
    }

    #[test]
    fn version_mismatch() {
        let f = br#"{"v":2,"type":"hello","src":"console","dst":"*","seq":1,"payload":{"role":"console"}}"#;
        assert_eq!(decode(f), Err(WireError::VersionMismatch { got: 2 }));
    }

    #[test]
    fn unknown_payload_keys_are_ignored() {
        let f = br#"{"v":1,"type":"cmd.balance","src":"console","dst":3,"seq":2,"payload":{"enabled":false,"color":"red"}}"#;
        let m = decode(f).unwrap();
        assert_eq!(m.body, MessageBody::CmdBalance(BalanceCmd { enabled: false }));
    }

    #[test]
    fn unknown_top_level_keys_are_rejected() {
        let f = br#"{"v":1,"type":"cmd.balance","src":"console","dst":3,"seq":2,"payload":{"enabled":false},"ttl":3}"#;
        assert!(matches!(decode(f), Err(WireError::MalformedFrame(_))));
    }

    #[test]
    fn missing_keys_and_bad_endpoints() {
        let f = br#"{"v":1,"type":"cmd.balance","src":"console","dst":3,"payload":{"enabled":false}}"#;
        assert!(matches!(decode(f), Err(WireError::MalformedFrame(_))));
        let f = br#"{"v":1,"type":"cmd.balance","src":"robot","dst":3,"seq":1,"payload":{"enabled":false}}"#;
        assert!(matches!(decode(f), Err(WireError::MalformedFrame(_))));
        let f = br#"{"v":1,"type":"cmd.balance","src":-4,"dst":3,"seq":1,"payload":{"enabled":false}}"#;
        assert!(matches!(decode(f), Err(WireError::MalformedFrame(_))));
    }

    #[test]
    fn payload_shape_errors_are_malformed() {
        let f = br#"{"v":1,"type":"cmd.primitive","src":"console","dst":3,"seq":1,"payload":{"kind":"moonwalk"}}"#;
        assert!(matches!(decode(f), Err(WireError::MalformedFrame(_))));
        let f = br#"{"v":1,"type":"sync.beacon","src":1,"dst":"*","seq":1,"payload":[]}"#;
        assert!(matches!(decode(f), Err(WireError::MalformedFrame(_))));
    }

    #[test]
    fn accepts_crlf_terminator() {
        let mut bytes = stop_frame().to_line().into_bytes();
        bytes.extend_from_slice(b"\r\n");
        assert_eq!(decode(&bytes).unwrap(), stop_frame());
    }
}
