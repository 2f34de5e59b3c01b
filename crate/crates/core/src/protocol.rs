//! Wire format shared by the TCP and WebSocket transports.
//!
//! Every message is one JSON document `{type, seq, ts_ms, payload}` on its own
//! line. Encoding is canonical: object keys are sorted, floats round-trip
//! exactly. Unknown fields are ignored on decode; a missing `seq` or `ts_ms`
//! reads as 0.
//!
//! `seq` counts messages within a stream. Frames carry the frame sequence
//! number; every other server message counts along the reliable stream.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::controller::FeedbackEvent;
use crate::scene::SceneObject;
use crate::skeleton::HandPose;

/// Longest accepted line, in bytes.
pub const MAX_LINE: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    // client → server
    /// Streamed recognition text; `is_final` ends the utterance.
    CommandText { text: String, is_final: bool },
    DisambiguationReply { label: u64 },
    Ping,
    // server → client
    Frame(HandPose),
    SceneInit { objects: Vec<SceneObject> },
    SceneDelta { objects: Vec<SceneObject> },
    Feedback(FeedbackEvent),
    Pong,
    ProtocolError { message: String },
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::CommandText { .. } => "command_text",
            Body::DisambiguationReply { .. } => "disambiguation_reply",
            Body::Ping => "ping",
            Body::Frame(_) => "frame",
            Body::SceneInit { .. } => "scene_init",
            Body::SceneDelta { .. } => "scene_delta",
            Body::Feedback(_) => "feedback",
            Body::Pong => "pong",
            Body::ProtocolError { .. } => "protocol_error",
        }
    }

    /// Whether this message must not be dropped under backpressure.
    pub fn is_reliable(&self) -> bool {
        !matches!(self, Body::Frame(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub seq: u64,
    pub ts_ms: u64,
    pub body: Body,
}

impl WireMessage {
    pub fn new(seq: u64, ts_ms: u64, body: Body) -> WireMessage {
        WireMessage { seq, ts_ms, body }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("bad `{kind}` payload: {reason}")]
    BadPayload { kind: String, reason: String },
    #[error("line longer than {MAX_LINE} bytes")]
    TooLong,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("wire types serialize")
}

#[derive(Deserialize)]
struct Envelope {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    seq: u64,
    #[serde(default)]
    ts_ms: u64,
    #[serde(default)]
    payload: Value,
}

#[derive(Deserialize)]
struct ObjectsPayload {
    objects: Vec<SceneObject>,
}

#[derive(Deserialize)]
struct TextPayload {
    text: String,
    #[serde(default = "yes", rename = "final")]
    is_final: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
struct MessagePayload {
    message: String,
}

/// The message as a JSON value (keys sorted).
pub fn to_json(msg: &WireMessage) -> Value {
    let payload = match &msg.body {
        Body::CommandText { text, is_final } => json!({ "text": text, "final": is_final }),
        Body::DisambiguationReply { label } => json!({ "label": label }),
        Body::Ping | Body::Pong => Value::Null,
        Body::Frame(pose) => to_value(pose),
        Body::SceneInit { objects } | Body::SceneDelta { objects } => json!({ "objects": to_value(objects) }),
        Body::Feedback(event) => to_value(event),
        Body::ProtocolError { message } => json!({ "message": message }),
    };
    let mut env = Map::new();
    env.insert("type".into(), msg.body.type_name().into());
    env.insert("seq".into(), msg.seq.into());
    env.insert("ts_ms".into(), msg.ts_ms.into());
    env.insert("payload".into(), payload);
    Value::Object(env)
}

/// One line, without the trailing newline.
pub fn encode(msg: &WireMessage) -> String {
    to_json(msg).to_string()
}

/// One line including the trailing newline.
pub fn encode_line(msg: &WireMessage) -> Vec<u8> {
    let mut out = encode(msg).into_bytes();
    out.push(b'\n');
    out
}

pub fn decode(doc: &[u8]) -> Result<WireMessage, DecodeError> {
    let env: Envelope = serde_json::from_slice(doc).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let bad = |e: serde_json::Error| DecodeError::BadPayload {
        kind: env.kind.clone(),
        reason: e.to_string(),
    };
    let payload = env.payload.clone();
    let body = match env.kind.as_str() {
        "command_text" => match payload {
            // Shorthand: a bare string is a complete utterance.
            Value::String(text) => Body::CommandText { text, is_final: true },
            other => {
                let p: TextPayload = serde_json::from_value(other).map_err(bad)?;
                Body::CommandText {
                    text: p.text,
                    is_final: p.is_final,
                }
            }
        },
        "disambiguation_reply" => {
            let label = match &payload {
                Value::Number(_) => payload.as_u64(),
                Value::Object(m) => m.get("label").and_then(Value::as_u64),
                _ => None,
            };
            Body::DisambiguationReply {
                label: label.ok_or_else(|| DecodeError::BadPayload {
                    kind: env.kind.clone(),
                    reason: "expected a label number".into(),
                })?,
            }
        }
        "ping" => Body::Ping,
        "pong" => Body::Pong,
        "frame" => Body::Frame(serde_json::from_value(payload).map_err(bad)?),
        "scene_init" => Body::SceneInit {
            objects: serde_json::from_value::<ObjectsPayload>(payload).map_err(bad)?.objects,
        },
        "scene_delta" => Body::SceneDelta {
            objects: serde_json::from_value::<ObjectsPayload>(payload).map_err(bad)?.objects,
        },
        "feedback" => Body::Feedback(serde_json::from_value(payload).map_err(bad)?),
        "protocol_error" => Body::ProtocolError {
            message: serde_json::from_value::<MessagePayload>(payload).map_err(bad)?.message,
        },
        _ => return Err(DecodeError::UnknownType(env.kind)),
    };
    Ok(WireMessage {
        seq: env.seq,
        ts_ms: env.ts_ms,
        body,
    })
}

/// Splits a byte stream into lines and decodes each one. A bad line yields an
/// error and decoding picks up again at the next newline.
#[derive(Debug, Default)]
pub struct LineDecoder {
    buf: Vec<u8>,
    /// Inside an over-long line; drop bytes until its newline.
    skipping: bool,
}

impl LineDecoder {
    pub fn new() -> LineDecoder {
        LineDecoder::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Result<WireMessage, DecodeError>> {
        let mut out = Vec::new();
        let mut rest = bytes;
        while let Some(nl) = rest.iter().position(|&b| b == b'\n') {
            let (line, tail) = rest.split_at(nl);
            rest = &tail[1..];
            if self.skipping {
                self.skipping = false;
                self.buf.clear();
                continue;
            }
            self.buf.extend_from_slice(line);
            let doc = std::mem::take(&mut self.buf);
            if let Some(r) = decode_line(&doc) {
                out.push(r);
            }
        }
        if !self.skipping {
            self.buf.extend_from_slice(rest);
            if self.buf.len() > MAX_LINE {
                self.buf.clear();
                self.skipping = true;
                out.push(Err(DecodeError::TooLong));
            }
        }
        out
    }

    /// Bytes waiting for a newline.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}

/// Decodes one line; blank lines are skipped.
pub fn decode_line(line: &[u8]) -> Option<Result<WireMessage, DecodeError>> {
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    if line.iter().all(u8::is_ascii_whitespace) {
        return None;
    }
    Some(decode(line))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthand_command_text() {
        let m = decode(br#"{"type":"command_text","payload":"pinch the cube."}"#).unwrap();
        assert_eq!(
            m,
            WireMessage::new(
                0,
                0,
                Body::CommandText {
                    text: "pinch the cube.".into(),
                    is_final: true
                }
            )
        );
    }

    #[test]
    fn zero_frame_is_63_zeros() {
        let v = to_json(&WireMessage::new(1, 2, Body::Frame(HandPose::zeros())));
        let xs = v["payload"].as_array().unwrap();
        assert_eq!(xs.len(), 63);
        assert!(xs.iter().all(|x| x.as_f64() == Some(0.0)));
    }

    #[test]
    fn unknown_type_and_fields() {
        assert_eq!(
            decode(br#"{"type":"warp","seq":3}"#),
            Err(DecodeError::UnknownType("warp".into()))
        );
        let m = decode(br#"{"type":"ping","seq":4,"ts_ms":9,"extra":[1,2]}"#).unwrap();
        assert_eq!(m, WireMessage::new(4, 9, Body::Ping));
    }

    #[test]
    fn resyncs_after_truncation() {
        let good = encode_line(&WireMessage::new(7, 0, Body::Ping));
        let mut stream = good[..good.len() / 2].to_vec();
        stream.push(b'\n');
        stream.extend_from_slice(&good);
        let mut d = LineDecoder::new();
        let got = d.push(&stream);
        assert!(matches!(got[0], Err(DecodeError::Malformed(_))));
        assert_eq!(got[1], Ok(WireMessage::new(7, 0, Body::Ping)));
    }

    #[test]
    fn overlong_lines_are_skipped() {
        let mut d = LineDecoder::new();
        let junk = vec![b'x'; MAX_LINE + 10];
        assert_eq!(d.push(&junk), vec![Err(DecodeError::TooLong)]);
        assert!(d.push(b"more junk").is_empty());
        let got = d.push(b"\n{\"type\":\"pong\"}\n");
        assert_eq!(got, vec![Ok(WireMessage::new(0, 0, Body::Pong))]);
    }
}
