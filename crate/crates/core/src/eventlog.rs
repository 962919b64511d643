//! Append-only session log and deterministic replay.
//!
//! Stored as JSONL, one record per line:
//!
//! ```text
//! {"dir":"in","frame":{"type":"toggle"},"seq":1,"t_ms":120}
//! {"dir":"in","frame":{"distance_m":0.5,"kind":"pir_motion","type":"sensor"},"seq":2,"t_ms":130}
//! {"dir":"out","frame":{"at_ms":130,"kind":"proximity","message":"keep safe distance","type":"alert"},"seq":3,"t_ms":130}
//! ```
//!
//! Sensor readings (including servo feedback) are logged as inbound frames
//! of type `sensor`, a type the network decoder never accepts.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::firmware::{self, DeviceConfig, MaskState, SensorEvent, SensorKind};
use crate::protocol::Frame;
use crate::scalar::{json::number, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Frame(Frame),
    Sensor(SensorKind<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub seq: u64,
    pub t_ms: u64,
    pub dir: Direction,
    pub entry: LogEntry,
}

impl LogRecord {
    pub fn to_json_line(&self) -> String {
        let frame = match &self.entry {
            LogEntry::Frame(frame) => frame.to_value(),
            LogEntry::Sensor(kind) => sensor_value(kind),
        };
        let mut map = Map::new();
        map.insert("seq".into(), Value::from(self.seq));
        map.insert("t_ms".into(), Value::from(self.t_ms));
        map.insert("dir".into(), Value::from(self.dir.as_str()));
        map.insert("frame".into(), frame);
        Value::Object(map).to_string()
    }
}

fn sensor_value(kind: &SensorKind<f64>) -> Value {
    let mut map = Map::new();
    map.insert("type".into(), Value::from("sensor"));
    let (name, field) = match *kind {
        SensorKind::IrGesture => ("ir_gesture", None),
        SensorKind::PirMotion { distance_m } => ("pir_motion", Some(("distance_m", distance_m))),
        SensorKind::Temperature { celsius } => ("temperature", Some(("celsius", celsius))),
        SensorKind::ServoPosition { angle_deg } => ("servo_position", Some(("angle_deg", angle_deg))),
    };
    map.insert("kind".into(), Value::from(name));
    if let Some((key, v)) = field {
        map.insert(key.into(), number(v));
    }
    Value::Object(map)
}

fn parse_sensor(frame: &Value) -> Result<SensorKind<f64>, String> {
    let num = |key: &str| {
        frame
            .get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| format!("sensor frame without numeric {key}"))
    };
    Ok(match frame.get("kind").and_then(Value::as_str) {
        Some("ir_gesture") => SensorKind::IrGesture,
        Some("pir_motion") => SensorKind::PirMotion {
            distance_m: num("distance_m")?,
        },
        Some("temperature") => SensorKind::Temperature {
            celsius: num("celsius")?,
        },
        Some("servo_position") => SensorKind::ServoPosition {
            angle_deg: num("angle_deg")?,
        },
        other => return Err(format!("unknown sensor kind {other:?}")),
    })
}

fn parse_record(line: &str) -> Result<LogRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let seq = value
        .get("seq")
        .and_then(Value::as_u64)
        .ok_or("missing seq")?;
    let t_ms = value
        .get("t_ms")
        .and_then(Value::as_u64)
        .ok_or("missing t_ms")?;
    let dir = match value.get("dir").and_then(Value::as_str) {
        Some("in") => Direction::In,
        Some("out") => Direction::Out,
        _ => return Err("dir must be \"in\" or \"out\"".into()),
    };
    let frame = value.get("frame").ok_or("missing frame")?;
    let entry = if frame.get("type").and_then(Value::as_str) == Some("sensor") {
        LogEntry::Sensor(parse_sensor(frame)?)
    } else {
        LogEntry::Frame(Frame::from_value(frame).map_err(|e| e.to_string())?)
    };
    Ok(LogRecord {
        seq,
        t_ms,
        dir,
        entry,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("CorruptLog at seq {seq} (line {line}): {reason}")]
pub struct CorruptLog {
    /// Sequence number at which the log stops being trustworthy: the seq
    /// found on the offending line, or the expected one if unreadable.
    pub seq: u64,
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

/// In-memory log. Sequence numbers start at 1 and increase by one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, t_ms: u64, dir: Direction, entry: LogEntry) -> &LogRecord {
        let seq = self.records.last().map_or(1, |r| r.seq + 1);
        self.records.push(LogRecord {
            seq,
            t_ms,
            dir,
            entry,
        });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| r.to_json_line() + "\n")
            .collect()
    }

    /// Parses a JSONL log, checking that seq starts at 1 without gaps.
    /// Blank lines are skipped.
    pub fn parse_jsonl(text: &str) -> Result<Self, CorruptLog> {
        let mut records: Vec<LogRecord> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let expected = records.last().map_or(1, |r| r.seq + 1);
            let record = parse_record(line).map_err(|reason| CorruptLog {
                seq: expected,
                line: idx + 1,
                reason,
            })?;
            if record.seq != expected {
                return Err(CorruptLog {
                    seq: record.seq,
                    line: idx + 1,
                    reason: format!("expected seq {expected}"),
                });
            }
            records.push(record);
        }
        Ok(Self { records })
    }
}

/// Re-applies the inbound entries of a log to a fresh firmware state.
pub fn replay<S: Scalar>(records: &[LogRecord], config: &DeviceConfig<S>) -> MaskState<S> {
    let mut state = MaskState::initial(config);
    for record in records.iter().filter(|r| r.dir == Direction::In) {
        state = apply_entry(&state, config, record);
    }
    state
}

/// Parses and replays a JSONL log.
pub fn replay_jsonl<S: Scalar>(text: &str, config: &DeviceConfig<S>) -> Result<MaskState<S>, CorruptLog> {
    let log = EventLog::parse_jsonl(text)?;
    Ok(replay(log.records(), config))
}

fn apply_entry<S: Scalar>(state: &MaskState<S>, config: &DeviceConfig<S>, record: &LogRecord) -> MaskState<S> {
    match &record.entry {
        LogEntry::Frame(Frame::SetAngle { angle }) => {
            match firmware::apply_set_angle(state, config, S::from_f64_lossy(*angle)) {
                Ok(out) => out.new_state,
                Err(_) => *state,
            }
        }
        LogEntry::Frame(Frame::Toggle) => firmware::apply_toggle(state, config).new_state,
        LogEntry::Frame(_) => *state,
        LogEntry::Sensor(kind) => {
            let kind = match *kind {
                SensorKind::IrGesture => SensorKind::IrGesture,
                SensorKind::PirMotion { distance_m } => SensorKind::PirMotion {
                    distance_m: S::from_f64_lossy(distance_m),
                },
                SensorKind::Temperature { celsius } => SensorKind::Temperature {
                    celsius: S::from_f64_lossy(celsius),
                },
                SensorKind::ServoPosition { angle_deg } => SensorKind::ServoPosition {
                    angle_deg: S::from_f64_lossy(angle_deg),
                },
            };
            firmware::handle_event(state, config, &SensorEvent::new(record.t_ms, kind)).new_state
        }
    }
}
