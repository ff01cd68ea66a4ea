//! Wire protocol: one JSON object per WebSocket text message.
//!
//! Server to client: `move`, `click`, `hold`, `release` and `scroll`
//! commands, each carrying a server-wide sequence number and the source
//! frame timestamp. Feed to server: `frame` messages. Client to server on
//! connect: `hello`. Decoding is strict: unknown kinds, missing keys, extra
//! keys and out-of-range values are all rejected.

mod link;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub use link::{Delivery, InvalidLink, LinkParams, LinkSim};

use crate::model::{validate_frame, HandFrame};
use crate::recognizer::ScrollDirection;

/// A cursor command without its envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Move { x: u32, y: u32 },
    Click { x: u32, y: u32 },
    Hold,
    Release,
    Scroll { dir: ScrollDirection, n: u32 },
}

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::Move { .. } => "move",
            Command::Click { .. } => "click",
            Command::Hold => "hold",
            Command::Release => "release",
            Command::Scroll { .. } => "scroll",
        }
    }

    pub fn is_move(&self) -> bool {
        matches!(self, Command::Move { .. })
    }

    pub fn position(&self) -> Option<(u32, u32)> {
        match *self {
            Command::Move { x, y } | Command::Click { x, y } => Some((x, y)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CommandMessage {
    pub command: Command,
    pub seq: u64,
    pub ts_us: u64,
}

impl Serialize for CommandMessage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("t", self.command.kind())?;
        match &self.command {
            Command::Move { x, y } | Command::Click { x, y } => {
                m.serialize_entry("x", x)?;
                m.serialize_entry("y", y)?;
            }
            Command::Scroll { dir, n } => {
                m.serialize_entry("dir", dir.as_str())?;
                m.serialize_entry("n", n)?;
            }
            Command::Hold | Command::Release => {}
        }
        m.serialize_entry("seq", &self.seq)?;
        m.serialize_entry("ts_us", &self.ts_us)?;
        m.end()
    }
}

/// Greeting a cursor client sends right after connecting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub role: String,
    pub name: String,
}

impl Serialize for Hello {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("t", "hello")?;
        m.serialize_entry("role", &self.role)?;
        m.serialize_entry("name", &self.name)?;
        m.end()
    }
}

impl Hello {
    pub fn client(name: impl Into<String>) -> Self {
        Self { role: "client".into(), name: name.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Command(CommandMessage),
    Frame(HandFrame),
    Hello(Hello),
}

impl From<CommandMessage> for Message {
    fn from(c: CommandMessage) -> Self {
        Message::Command(c)
    }
}

impl From<HandFrame> for Message {
    fn from(f: HandFrame) -> Self {
        Message::Frame(f)
    }
}

struct FrameWire<'a>(&'a HandFrame);

impl Serialize for FrameWire<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let f = self.0;
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("t", "frame")?;
        m.serialize_entry("ts_us", &f.ts_us)?;
        m.serialize_entry("hand", &f.hand_present)?;
        m.serialize_entry("palm", &f.palm)?;
        m.serialize_entry("palm_normal", &f.palm_normal)?;
        m.serialize_entry("fingers", &f.fingers)?;
        m.end()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("invalid message: {0}")]
    InvalidMessage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("not a JSON object: {0}")]
    Malformed(String),
    #[error("unknown message kind {0:?}")]
    UnknownKind(String),
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("unexpected field {0:?}")]
    UnexpectedField(String),
    #[error("field {field:?} out of range: {reason}")]
    RangeError { field: String, reason: String },
}

fn range(field: &str, reason: impl Into<String>) -> DecodeError {
    DecodeError::RangeError { field: field.into(), reason: reason.into() }
}

/// Serializes `msg` as one compact JSON text message.
pub fn encode(msg: &Message) -> Result<String, EncodeError> {
    let out = match msg {
        Message::Command(c) => {
            if let Command::Scroll { n: 0, .. } = c.command {
                return Err(EncodeError::InvalidMessage("scroll with zero notches".into()));
            }
            serde_json::to_string(c)
        }
        Message::Frame(f) => {
            validate_frame(f.clone(), None).map_err(|e| EncodeError::InvalidMessage(e.to_string()))?;
            serde_json::to_string(&FrameWire(f))
        }
        Message::Hello(h) => {
            if h.role.is_empty() {
                return Err(EncodeError::InvalidMessage("empty hello role".into()));
            }
            serde_json::to_string(h)
        }
    };
    out.map_err(|e| EncodeError::InvalidMessage(e.to_string()))
}

pub fn encode_command(c: &CommandMessage) -> Result<String, EncodeError> {
    encode(&Message::Command(*c))
}

fn check_keys(obj: &Map<String, Value>, required: &[&str]) -> Result<(), DecodeError> {
    for key in required {
        if !obj.contains_key(*key) {
            return Err(DecodeError::MissingField((*key).into()));
        }
    }
    if let Some(extra) = obj.keys().find(|k| k.as_str() != "t" && !required.contains(&k.as_str())) {
        return Err(DecodeError::UnexpectedField(extra.clone()));
    }
    Ok(())
}

fn get_u64(obj: &Map<String, Value>, key: &str) -> Result<u64, DecodeError> {
    let v = &obj[key];
    v.as_u64().ok_or_else(|| range(key, format!("expected a non-negative integer, got {v}")))
}

fn get_u32(obj: &Map<String, Value>, key: &str) -> Result<u32, DecodeError> {
    let v = get_u64(obj, key)?;
    u32::try_from(v).map_err(|_| range(key, format!("{v} exceeds 32 bits")))
}

fn get_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, DecodeError> {
    obj[key].as_str().ok_or_else(|| range(key, "expected a string"))
}

fn envelope(obj: &Map<String, Value>, command: Command) -> Result<CommandMessage, DecodeError> {
    Ok(CommandMessage { command, seq: get_u64(obj, "seq")?, ts_us: get_u64(obj, "ts_us")? })
}

/// Strictly parses one text message.
pub fn decode(text: &str) -> Result<Message, DecodeError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(DecodeError::Malformed("top-level value is not an object".into()));
    };
    let kind = match obj.get("t") {
        None => return Err(DecodeError::MissingField("t".into())),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(DecodeError::UnknownKind(other.to_string())),
    };
    let msg = match kind.as_str() {
        "move" | "click" => {
            check_keys(&obj, &["x", "y", "seq", "ts_us"])?;
            let (x, y) = (get_u32(&obj, "x")?, get_u32(&obj, "y")?);
            let cmd = if kind == "move" { Command::Move { x, y } } else { Command::Click { x, y } };
            Message::Command(envelope(&obj, cmd)?)
        }
        "hold" | "release" => {
            check_keys(&obj, &["seq", "ts_us"])?;
            let cmd = if kind == "hold" { Command::Hold } else { Command::Release };
            Message::Command(envelope(&obj, cmd)?)
        }
        "scroll" => {
            check_keys(&obj, &["dir", "n", "seq", "ts_us"])?;
            let dir = match get_str(&obj, "dir")? {
                "up" => ScrollDirection::Up,
                "down" => ScrollDirection::Down,
                other => return Err(range("dir", format!("{other:?} is not up or down"))),
            };
            let n = get_u32(&obj, "n")?;
            if n == 0 {
                return Err(range("n", "notches must be at least 1"));
            }
            Message::Command(envelope(&obj, Command::Scroll { dir, n })?)
        }
        "hello" => {
            check_keys(&obj, &["role", "name"])?;
            let role = get_str(&obj, "role")?;
            if role.is_empty() {
                return Err(range("role", "empty"));
            }
            Message::Hello(Hello { role: role.into(), name: get_str(&obj, "name")?.into() })
        }
        "frame" => {
            check_keys(&obj, &["ts_us", "hand", "palm", "palm_normal", "fingers"])?;
            obj.remove("t");
            let frame: HandFrame =
                serde_json::from_value(Value::Object(obj)).map_err(|e| range("frame", e.to_string()))?;
            let frame = validate_frame(frame, None).map_err(|e| range("frame", e.to_string()))?;
            Message::Frame(frame)
        }
        _ => return Err(DecodeError::UnknownKind(kind)),
    };
    Ok(msg)
}

pub fn decode_bytes(bytes: &[u8]) -> Result<Message, DecodeError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    decode(text)
}
