//! Wire protocol: one JSON object per frame, discriminated by `"type"`.
//!
//! Frames are encoded with sorted keys and integral numbers written without
//! a fraction, so equal frames always encode to the same bytes:
//!
//! ```text
//! {"type":"toggle"}
//! {"angle":90,"type":"set_angle"}
//! {"at_ms":50,"kind":"proximity","message":"keep safe distance","type":"alert"}
//! ```

use serde_json::{Map, Value};
use thiserror::Error;

use crate::firmware::{AlertKind, Position};
use crate::scalar::json::number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommandName {
    SetAngle,
    Toggle,
    GetState,
    Subscribe,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::SetAngle => "set_angle",
            CommandName::Toggle => "toggle",
            CommandName::GetState => "get_state",
            CommandName::Subscribe => "subscribe",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "set_angle" => CommandName::SetAngle,
            "toggle" => CommandName::Toggle,
            "get_state" => CommandName::GetState,
            "subscribe" => CommandName::Subscribe,
            _ => return None,
        })
    }
}

/// Device status as seen by clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateFrame {
    pub angle_deg: f64,
    pub target_deg: f64,
    pub position: Position,
    pub last_temp_c: Option<f64>,
    pub alert_active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertFrame {
    pub kind: AlertKind,
    pub message: String,
    pub at_ms: u64,
}

impl From<&crate::firmware::Alert> for AlertFrame {
    fn from(alert: &crate::firmware::Alert) -> Self {
        Self {
            kind: alert.kind,
            message: alert.message.clone(),
            at_ms: alert.at_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    // client -> device
    SetAngle { angle: f64 },
    Toggle,
    GetState,
    Subscribe,
    // device -> client
    State(StateFrame),
    Alert(AlertFrame),
    Ack { of: CommandName },
    Error { code: String, message: String },
}

impl Frame {
    pub fn type_name(&self) -> &'static str {
        match self {
            Frame::SetAngle { .. } => "set_angle",
            Frame::Toggle => "toggle",
            Frame::GetState => "get_state",
            Frame::Subscribe => "subscribe",
            Frame::State(_) => "state",
            Frame::Alert(_) => "alert",
            Frame::Ack { .. } => "ack",
            Frame::Error { .. } => "error",
        }
    }

    /// The command this frame represents, for client-to-device frames.
    pub fn command(&self) -> Option<CommandName> {
        match self {
            Frame::SetAngle { .. } => Some(CommandName::SetAngle),
            Frame::Toggle => Some(CommandName::Toggle),
            Frame::GetState => Some(CommandName::GetState),
            Frame::Subscribe => Some(CommandName::Subscribe),
            _ => None,
        }
    }

    pub fn error(code: impl Into<String>, message: impl Into<String>) -> Self {
        Frame::Error {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("type".into(), Value::from(self.type_name()));
        match self {
            Frame::SetAngle { angle } => {
                map.insert("angle".into(), number(*angle));
            }
            Frame::Toggle | Frame::GetState | Frame::Subscribe => {}
            Frame::State(s) => {
                map.insert("angle_deg".into(), number(s.angle_deg));
                map.insert("target_deg".into(), number(s.target_deg));
                map.insert("position".into(), Value::from(s.position.as_str()));
                map.insert(
                    "last_temp_c".into(),
                    s.last_temp_c.map(number).unwrap_or(Value::Null),
                );
                map.insert("alert_active".into(), Value::from(s.alert_active));
            }
            Frame::Alert(a) => {
                map.insert("kind".into(), Value::from(a.kind.as_str()));
                map.insert("message".into(), Value::from(a.message.as_str()));
                map.insert("at_ms".into(), Value::from(a.at_ms));
            }
            Frame::Ack { of } => {
                map.insert("of".into(), Value::from(of.as_str()));
            }
            Frame::Error { code, message } => {
                map.insert("code".into(), Value::from(code.as_str()));
                map.insert("message".into(), Value::from(message.as_str()));
            }
        }
        Value::Object(map)
    }

    pub fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let obj = value
            .as_object()
            .ok_or_else(|| DecodeError::Malformed("frame is not a JSON object".into()))?;
        let ty = match obj.get("type") {
            Some(Value::String(s)) => s.as_str(),
            Some(_) => return Err(DecodeError::bad("type", ValueProblem::WrongType)),
            None => return Err(DecodeError::bad("type", ValueProblem::Missing)),
        };
        let fields = Fields(obj);
        Ok(match ty {
            "set_angle" => Frame::SetAngle {
                angle: fields.angle("angle")?,
            },
            "toggle" => Frame::Toggle,
            "get_state" => Frame::GetState,
            "subscribe" => Frame::Subscribe,
            "state" => Frame::State(StateFrame {
                angle_deg: fields.angle("angle_deg")?,
                target_deg: fields.angle("target_deg")?,
                position: match fields.str("position")? {
                    "covering" => Position::Covering,
                    "open" => Position::Open,
                    "partial" => Position::Partial,
                    "moving" => Position::Moving,
                    _ => return Err(DecodeError::bad("position", ValueProblem::Unknown)),
                },
                last_temp_c: fields.opt_number("last_temp_c")?,
                alert_active: fields.bool("alert_active")?,
            }),
            "alert" => Frame::Alert(AlertFrame {
                kind: match fields.str("kind")? {
                    "proximity" => AlertKind::Proximity,
                    "fever" => AlertKind::Fever,
                    _ => return Err(DecodeError::bad("kind", ValueProblem::Unknown)),
                },
                message: fields.str("message")?.to_string(),
                at_ms: fields.u64("at_ms")?,
            }),
            "ack" => Frame::Ack {
                of: CommandName::parse(fields.str("of")?)
                    .ok_or_else(|| DecodeError::bad("of", ValueProblem::Unknown))?,
            },
            "error" => Frame::Error {
                code: fields.str("code")?.to_string(),
                message: fields.str("message")?.to_string(),
            },
            other => return Err(DecodeError::UnknownType(other.to_string())),
        })
    }
}

/// Encodes a frame as a single line (no trailing newline).
pub fn encode_frame(frame: &Frame) -> String {
    // serde_json's default map is ordered, so keys come out sorted
    frame.to_value().to_string()
}

/// Decodes one line. Unknown extra fields are ignored.
pub fn decode_frame(line: &str) -> Result<Frame, DecodeError> {
    let value: Value =
        serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    Frame::from_value(&value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueProblem {
    Missing,
    WrongType,
    Unknown,
    /// Angle outside [0, 180].
    OutOfRange(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown frame type {0:?}")]
    UnknownType(String),
    #[error("bad value for {field}: {problem:?}")]
    BadValue {
        field: &'static str,
        problem: ValueProblem,
    },
}

impl DecodeError {
    fn bad(field: &'static str, problem: ValueProblem) -> Self {
        DecodeError::BadValue { field, problem }
    }

    /// Error code reported to clients in an error frame.
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::Malformed(_) => "malformed",
            DecodeError::UnknownType(_) => "unknown_type",
            DecodeError::BadValue {
                problem: ValueProblem::OutOfRange(_),
                ..
            } => "out_of_range",
            DecodeError::BadValue { .. } => "bad_value",
        }
    }

    pub fn to_frame(&self) -> Frame {
        Frame::error(self.code(), self.to_string())
    }
}

struct Fields<'a>(&'a Map<String, Value>);

impl<'a> Fields<'a> {
    fn get(&self, field: &'static str) -> Result<&'a Value, DecodeError> {
        self.0
            .get(field)
            .ok_or(DecodeError::bad(field, ValueProblem::Missing))
    }

    fn number(&self, field: &'static str) -> Result<f64, DecodeError> {
        self.get(field)?
            .as_f64()
            .ok_or(DecodeError::bad(field, ValueProblem::WrongType))
    }

    fn opt_number(&self, field: &'static str) -> Result<Option<f64>, DecodeError> {
        match self.0.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(_) => self.number(field).map(Some),
        }
    }

    fn angle(&self, field: &'static str) -> Result<f64, DecodeError> {
        let angle = self.number(field)?;
        if (0.0..=180.0).contains(&angle) {
            Ok(angle)
        } else {
            Err(DecodeError::bad(field, ValueProblem::OutOfRange(angle)))
        }
    }

    fn u64(&self, field: &'static str) -> Result<u64, DecodeError> {
        self.get(field)?
            .as_u64()
            .ok_or(DecodeError::bad(field, ValueProblem::WrongType))
    }

    fn str(&self, field: &'static str) -> Result<&'a str, DecodeError> {
        self.get(field)?
            .as_str()
            .ok_or(DecodeError::bad(field, ValueProblem::WrongType))
    }

    fn bool(&self, field: &'static str) -> Result<bool, DecodeError> {
        self.get(field)?
            .as_bool()
            .ok_or(DecodeError::bad(field, ValueProblem::WrongType))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firmware::PROXIMITY_MESSAGE;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_frame(&Frame::Toggle), r#"{"type":"toggle"}"#);
        assert_eq!(
            encode_frame(&Frame::SetAngle { angle: 90.0 }),
            r#"{"angle":90,"type":"set_angle"}"#
        );
        let alert = Frame::Alert(AlertFrame {
            kind: AlertKind::Proximity,
            message: PROXIMITY_MESSAGE.into(),
            at_ms: 50,
        });
        assert_eq!(
            encode_frame(&alert),
            r#"{"at_ms":50,"kind":"proximity","message":"keep safe distance","type":"alert"}"#
        );
        let state = Frame::State(StateFrame {
            angle_deg: 12.5,
            target_deg: 180.0,
            position: Position::Moving,
            last_temp_c: None,
            alert_active: false,
        });
        assert_eq!(
            encode_frame(&state),
            r#"{"alert_active":false,"angle_deg":12.5,"last_temp_c":null,"position":"moving","target_deg":180,"type":"state"}"#
        );
        assert_eq!(
            encode_frame(&Frame::Ack { of: CommandName::GetState }),
            r#"{"of":"get_state","type":"ack"}"#
        );
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_frame(r#"{"type":"set_angle","angle":90}"#),
            Ok(Frame::SetAngle { angle: 90.0 })
        );
        assert_eq!(
            decode_frame(r#"{"type":"fly"}"#),
            Err(DecodeError::UnknownType("fly".into()))
        );
        assert!(matches!(decode_frame("not json"), Err(DecodeError::Malformed(_))));
        assert!(matches!(decode_frame("[1,2]"), Err(DecodeError::Malformed(_))));
    }

    #[test]
    fn decode_ignores_unknown_fields_and_newline() {
        assert_eq!(
            decode_frame("{\"type\":\"toggle\",\"from\":\"ui\"}\r\n"),
            Ok(Frame::Toggle)
        );
    }

    #[test]
    fn decode_bad_values() {
        let err = decode_frame(r#"{"type":"set_angle","angle":300}"#).unwrap_err();
        assert_eq!(err.code(), "out_of_range");
        assert_eq!(
            decode_frame(r#"{"type":"set_angle","angle":"ninety"}"#),
            Err(DecodeError::BadValue {
                field: "angle",
                problem: ValueProblem::WrongType
            })
        );
        assert_eq!(
            decode_frame(r#"{"type":"set_angle"}"#).unwrap_err().code(),
            "bad_value"
        );
        assert_eq!(decode_frame(r#"{"angle":3}"#).unwrap_err().code(), "bad_value");
        assert_eq!(decode_frame(r#"{"type":7}"#).unwrap_err().code(), "bad_value");
        assert_eq!(
            decode_frame(r#"{"type":"ack","of":"dance"}"#).unwrap_err().code(),
            "bad_value"
        );
    }
}
