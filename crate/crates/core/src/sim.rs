//! Discrete-time device simulator.
//!
//! [`Simulator`] owns the virtual clock, the firmware state and the servo
//! model. It is driven tick by tick, either by [`run_scenario`] or by the
//! live control plane.

use serde::Serialize;
use thiserror::Error;

use crate::firmware::{
    self, Alert, DeviceConfig, FirmwareError, MaskState, Position, SensorEvent, SensorKind,
    StepOutput,
};
use crate::scalar::{json, Scalar};
use crate::scenario::Scenario;
use crate::servo::{ServoError, ServoModel};

pub const DEFAULT_TICK_MS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("tick_ms must be > 0")]
    ZeroTick,
    #[error("invalid device config: {0}")]
    Config(#[from] firmware::ConfigError),
    #[error("invalid servo: {0}")]
    Servo(#[from] ServoError),
}

#[derive(Debug, Clone)]
pub struct Simulator<S> {
    config: DeviceConfig<S>,
    state: MaskState<S>,
    servo: ServoModel<S>,
    tick_ms: u64,
    now_ms: u64,
}

impl<S: Scalar> Simulator<S> {
    /// A simulator at t = 0 with the mask settled over the face.
    pub fn new(config: DeviceConfig<S>, tick_ms: u64) -> Result<Self, SimError> {
        let servo = ServoModel::at_rest(config.angle_covering)?;
        Self::with_servo(config, servo, tick_ms)
    }

    pub fn with_servo(config: DeviceConfig<S>, servo: ServoModel<S>, tick_ms: u64) -> Result<Self, SimError> {
        if tick_ms == 0 {
            return Err(SimError::ZeroTick);
        }
        config.validate()?;
        let servo = servo.validated()?;
        let mut state = MaskState::initial(&config);
        state.current_angle_deg = servo.current_angle_deg;
        state.target_angle_deg = servo.target_angle_deg;
        state.position = config.classify(state.current_angle_deg, state.target_angle_deg);
        Ok(Self {
            config,
            state,
            servo,
            tick_ms,
            now_ms: 0,
        })
    }

    pub fn config(&self) -> &DeviceConfig<S> {
        &self.config
    }

    pub fn state(&self) -> &MaskState<S> {
        &self.state
    }

    pub fn servo(&self) -> &ServoModel<S> {
        &self.servo
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn tick_ms(&self) -> u64 {
        self.tick_ms
    }

    /// Servo and firmware both at rest.
    pub fn is_quiescent(&self) -> bool {
        self.servo.is_settled() && self.state.is_settled()
    }

    /// Feeds a sensor reading stamped with the current virtual time.
    pub fn inject(&mut self, kind: SensorKind<S>) -> StepOutput<S> {
        let event = SensorEvent::new(self.now_ms, kind);
        let out = firmware::handle_event(&self.state, &self.config, &event);
        self.commit(out)
    }

    /// Remote slider command.
    pub fn set_angle(&mut self, angle: S) -> Result<StepOutput<S>, FirmwareError> {
        let out = firmware::apply_set_angle(&self.state, &self.config, angle)?;
        Ok(self.commit(out))
    }

    /// Remote open/close command.
    pub fn toggle(&mut self) -> StepOutput<S> {
        let out = firmware::apply_toggle(&self.state, &self.config);
        self.commit(out)
    }

    fn commit(&mut self, out: StepOutput<S>) -> StepOutput<S> {
        if let Some(cmd) = out.command {
            self.servo.command(cmd.target_angle_deg);
        }
        self.state = out.new_state;
        out
    }

    /// Moves the servo by one tick and feeds its position back into the
    /// firmware. Returns the fed-back angle.
    pub fn step_servo(&mut self) -> S {
        self.servo = self.servo.step(self.tick_ms);
        let angle = self.servo.current_angle_deg;
        self.inject(SensorKind::ServoPosition { angle_deg: angle });
        angle
    }

    /// Advances the virtual clock by one tick.
    pub fn advance_clock(&mut self) {
        self.now_ms += self.tick_ms;
    }
}

/// One line of a transcript.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = ""))]
pub struct TranscriptRecord<S: Scalar> {
    pub t_ms: u64,
    /// Servo shaft angle after this tick.
    #[serde(serialize_with = "json::serialize")]
    pub angle_deg: S,
    #[serde(serialize_with = "json::serialize")]
    pub target_deg: S,
    pub position: Position,
    /// Target of the last servo command issued during this tick.
    #[serde(serialize_with = "json::serialize_opt")]
    pub command: Option<S>,
    pub alerts: Vec<Alert>,
    #[serde(skip)]
    pub state: MaskState<S>,
    /// Scenario events delivered during this tick.
    #[serde(skip)]
    pub injected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript<S: Scalar> {
    pub tick_ms: u64,
    pub records: Vec<TranscriptRecord<S>>,
}

impl<S: Scalar> Transcript<S> {
    /// One JSON object per line, each terminated by `\n`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("transcript records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> Option<&TranscriptRecord<S>> {
        self.records.last()
    }

    pub fn alerts(&self) -> impl Iterator<Item = &Alert> {
        self.records.iter().flat_map(|r| r.alerts.iter())
    }
}

/// Runs a scenario to completion on the default SG-90 servo.
pub fn run_scenario<S: Scalar>(
    scenario: &Scenario<S>,
    config: &DeviceConfig<S>,
    tick_ms: u64,
) -> Result<Transcript<S>, SimError> {
    let sim = Simulator::new(*config, tick_ms)?;
    Ok(drive(sim, scenario))
}

/// Runs a scenario on an already configured simulator.
///
/// Each tick at time `t`: deliver the events with `at_ms` in `(t - tick, t]`,
/// forward commands to the servo, step the servo, feed back its position and
/// append a record. Ticking continues past the last event until the device
/// is quiescent.
pub fn drive<S: Scalar>(mut sim: Simulator<S>, scenario: &Scenario<S>) -> Transcript<S> {
    let events = scenario.events();
    let mut next = 0;
    let mut records = Vec::new();
    loop {
        let now = sim.now_ms();
        let mut command = None;
        let mut alerts = Vec::new();
        let first = next;
        while next < events.len() && events[next].at_ms <= now {
            let out = sim.inject(events[next].kind);
            if let Some(cmd) = out.command {
                command = Some(cmd.target_angle_deg);
            }
            alerts.extend(out.alerts);
            next += 1;
        }
        let angle = sim.step_servo();
        let state = *sim.state();
        records.push(TranscriptRecord {
            t_ms: now,
            angle_deg: angle,
            target_deg: state.target_angle_deg,
            position: state.position,
            command,
            alerts,
            state,
            injected: next - first,
        });
        if next == events.len() && sim.is_quiescent() {
            break;
        }
        sim.advance_clock();
    }
    Transcript {
        tick_ms: sim.tick_ms(),
        records,
    }
}
