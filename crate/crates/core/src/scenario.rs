//! Scripted sensor input for the simulator.
//!
//! Scenario files are JSON:
//!
//! ```json
//! {"events":[
//!   {"at_ms":100,"kind":"ir_gesture"},
//!   {"at_ms":250,"kind":"pir_motion","distance_m":0.8},
//!   {"at_ms":400,"kind":"temperature","celsius":38.4}
//! ]}
//! ```

use serde::Deserialize;
use thiserror::Error;

use crate::firmware::{SensorEvent, SensorKind};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("Malformed scenario: {0}")]
    Malformed(String),
    #[error("OutOfOrder at index {index}: at_ms {at_ms} is earlier than the previous event")]
    OutOfOrder { index: usize, at_ms: u64 },
    #[error("BadValue at index {index}: {reason}")]
    BadValue { index: usize, reason: String },
}

/// Sensor events ordered by time (non-decreasing `at_ms`).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<S> {
    events: Vec<SensorEvent<S>>,
}

impl<S: Scalar> Scenario<S> {
    pub fn empty() -> Self {
        Self { events: Vec::new() }
    }

    /// Builds a scenario, checking the ordering invariant.
    pub fn new(events: Vec<SensorEvent<S>>) -> Result<Self, ScenarioError> {
        if let Some(index) = events.windows(2).position(|w| w[1].at_ms < w[0].at_ms) {
            return Err(ScenarioError::OutOfOrder {
                index: index + 1,
                at_ms: events[index + 1].at_ms,
            });
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[SensorEvent<S>] {
        &self.events
    }

    pub fn last_at_ms(&self) -> Option<u64> {
        self.events.last().map(|e| e.at_ms)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Deserialize)]
struct RawScenario {
    events: Vec<RawEvent>,
}

#[derive(Deserialize)]
struct RawEvent {
    at_ms: u64,
    #[serde(flatten)]
    kind: RawKind,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawKind {
    IrGesture,
    PirMotion { distance_m: f64 },
    Temperature { celsius: f64 },
}

pub fn parse_scenario<S: Scalar>(text: &str) -> Result<Scenario<S>, ScenarioError> {
    let raw: RawScenario =
        serde_json::from_str(text).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    let mut events = Vec::with_capacity(raw.events.len());
    for (index, ev) in raw.events.into_iter().enumerate() {
        let bad = |reason: String| ScenarioError::BadValue { index, reason };
        let kind = match ev.kind {
            RawKind::IrGesture => SensorKind::IrGesture,
            RawKind::PirMotion { distance_m } => {
                if !distance_m.is_finite() || distance_m < 0.0 {
                    return Err(bad(format!("distance_m must be >= 0, got {distance_m}")));
                }
                SensorKind::PirMotion {
                    distance_m: S::from_f64_lossy(distance_m),
                }
            }
            RawKind::Temperature { celsius } => {
                if !celsius.is_finite() {
                    return Err(bad(format!("celsius must be finite, got {celsius}")));
                }
                SensorKind::Temperature {
                    celsius: S::from_f64_lossy(celsius),
                }
            }
        };
        events.push(SensorEvent::new(ev.at_ms, kind));
    }
    Scenario::new(events)
}
