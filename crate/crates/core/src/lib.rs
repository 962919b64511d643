//! Core of the SmartMask digital twin: the mask firmware as a pure state
//! machine, an SG-90 servo model, a deterministic tick simulator, the wire
//! protocol codec and the session log.
//!
//! The numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the simulator, the wire protocol and the CLI use.

// `!(a <= b)` is used on purpose: NaN readings must fail range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eventlog;
pub mod firmware;
pub mod protocol;
pub mod scalar;
pub mod scenario;
pub mod servo;
pub mod sim;

pub use eventlog::{replay, replay_jsonl, CorruptLog, Direction, EventLog, LogEntry, LogRecord};
pub use firmware::{
    apply_set_angle, apply_toggle, evaluate_proximity, evaluate_temperature, handle_event,
    observe_servo, toggle_target, Alert, AlertKind, FirmwareError, Position,
};
pub use protocol::{decode_frame, encode_frame, AlertFrame, CommandName, DecodeError, Frame, StateFrame};
pub use scalar::Scalar;
pub use scenario::{parse_scenario, ScenarioError};
pub use sim::{run_scenario, SimError, DEFAULT_TICK_MS};

pub type DeviceConfig = firmware::DeviceConfig<f64>;
pub type MaskState = firmware::MaskState<f64>;
pub type SensorEvent = firmware::SensorEvent<f64>;
pub type SensorKind = firmware::SensorKind<f64>;
pub type ServoCommand = firmware::ServoCommand<f64>;
pub type StepOutput = firmware::StepOutput<f64>;
pub type ServoModel = servo::ServoModel<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type Simulator = sim::Simulator<f64>;
pub type Transcript = sim::Transcript<f64>;
pub type TranscriptRecord = sim::TranscriptRecord<f64>;

/// Single-precision variants, matching what a microcontroller build would
/// use.
pub mod f32 {
    pub type DeviceConfig = crate::firmware::DeviceConfig<f32>;
    pub type MaskState = crate::firmware::MaskState<f32>;
    pub type ServoModel = crate::servo::ServoModel<f32>;
    pub type Simulator = crate::sim::Simulator<f32>;
}
