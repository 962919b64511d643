//! Reactive mask firmware.
//!
//! A pure state machine: every operation takes the current [`MaskState`] and
//! returns the next one. There is no clock here, time arrives inside each
//! [`SensorEvent`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{angle_max, angle_min, json, Scalar};

/// Proximity alert text shown to the wearer.
pub const PROXIMITY_MESSAGE: &str = "keep safe distance";

/// Plausible range of the temperature sensor in °C. Readings outside are
/// clamped.
pub const TEMPERATURE_RANGE_C: (i64, i64) = (-40, 125);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FirmwareError {
    #[error("angle {angle} is outside [0, 180]")]
    OutOfRange { angle: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field} must lie in [0, 180], got {value}")]
    AngleOutOfRange { field: &'static str, value: f64 },
    #[error("angle_covering and angle_open must differ")]
    SameEndpoints,
    #[error("proximity_threshold_m must be > 0, got {0}")]
    ProximityThreshold(f64),
    #[error("fever_threshold_c must be a finite number")]
    FeverThreshold,
}

/// Tunables of the device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(serialize = "S: Scalar", deserialize = "S: Scalar + Deserialize<'de>")
)]
pub struct DeviceConfig<S> {
    /// Servo angle at which the mask covers the face.
    #[serde(serialize_with = "json::serialize")]
    pub angle_covering: S,
    /// Servo angle at which the mask is lowered.
    #[serde(serialize_with = "json::serialize")]
    pub angle_open: S,
    /// A person at or closer than this distance raises a proximity alert.
    #[serde(serialize_with = "json::serialize")]
    pub proximity_threshold_m: S,
    /// A reading at or above this temperature raises a fever alert.
    #[serde(serialize_with = "json::serialize")]
    pub fever_threshold_c: S,
    pub gesture_refractory_ms: u64,
    pub alert_cooldown_ms: u64,
}

impl<S: Scalar> Default for DeviceConfig<S> {
    fn default() -> Self {
        Self {
            angle_covering: S::lit(0),
            angle_open: S::lit(180),
            proximity_threshold_m: S::lit(1),
            fever_threshold_c: S::lit(38),
            gesture_refractory_ms: 500,
            alert_cooldown_ms: 5000,
        }
    }
}

impl<S: Scalar> DeviceConfig<S> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [("angle_covering", self.angle_covering), ("angle_open", self.angle_open)] {
            if !value.within(angle_min(), angle_max()) {
                return Err(ConfigError::AngleOutOfRange {
                    field,
                    value: value.to_f64_lossy(),
                });
            }
        }
        if self.angle_covering == self.angle_open {
            return Err(ConfigError::SameEndpoints);
        }
        if !(self.proximity_threshold_m > S::zero()) {
            return Err(ConfigError::ProximityThreshold(self.proximity_threshold_m.to_f64_lossy()));
        }
        if !self.fever_threshold_c.to_f64_lossy().is_finite() {
            return Err(ConfigError::FeverThreshold);
        }
        Ok(())
    }

    /// Classifies a (current, target) pair.
    pub fn classify(&self, current: S, target: S) -> Position {
        if current != target {
            Position::Moving
        } else if current == self.angle_covering {
            Position::Covering
        } else if current == self.angle_open {
            Position::Open
        } else {
            Position::Partial
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Covering,
    Open,
    Partial,
    Moving,
}

impl Position {
    pub fn as_str(self) -> &'static str {
        match self {
            Position::Covering => "covering",
            Position::Open => "open",
            Position::Partial => "partial",
            Position::Moving => "moving",
        }
    }
}

/// The firmware's view of the device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct MaskState<S> {
    #[serde(serialize_with = "json::serialize")]
    pub current_angle_deg: S,
    #[serde(serialize_with = "json::serialize")]
    pub target_angle_deg: S,
    pub position: Position,
    pub last_gesture_ms: Option<u64>,
    pub last_proximity_alert_ms: Option<u64>,
    pub last_fever_alert_ms: Option<u64>,
}

impl<S: Scalar> MaskState<S> {
    /// Power-on state: settled over the face.
    pub fn initial(config: &DeviceConfig<S>) -> Self {
        Self::settled_at(config.angle_covering, config)
    }

    /// A state at rest at `angle` with no gesture or alert history.
    pub fn settled_at(angle: S, config: &DeviceConfig<S>) -> Self {
        let angle = angle.clamp_to(angle_min(), angle_max());
        Self {
            current_angle_deg: angle,
            target_angle_deg: angle,
            position: config.classify(angle, angle),
            last_gesture_ms: None,
            last_proximity_alert_ms: None,
            last_fever_alert_ms: None,
        }
    }

    pub fn is_settled(&self) -> bool {
        self.current_angle_deg == self.target_angle_deg
    }

    fn with_target(mut self, target: S, config: &DeviceConfig<S>) -> Self {
        self.target_angle_deg = target;
        self.position = config.classify(self.current_angle_deg, target);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "snake_case",
    bound(serialize = "S: Scalar", deserialize = "S: Scalar + Deserialize<'de>")
)]
pub enum SensorKind<S> {
    /// Hand waved in front of the IR sensor.
    IrGesture,
    /// PIR motion with the simulated distance of the moving body.
    PirMotion {
        #[serde(serialize_with = "json::serialize")]
        distance_m: S,
    },
    Temperature {
        #[serde(serialize_with = "json::serialize")]
        celsius: S,
    },
    /// Position feedback from the servo.
    ServoPosition {
        #[serde(serialize_with = "json::serialize")]
        angle_deg: S,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorEvent<S> {
    /// Milliseconds since the start of the run.
    pub at_ms: u64,
    pub kind: SensorKind<S>,
}

impl<S> SensorEvent<S> {
    pub fn new(at_ms: u64, kind: SensorKind<S>) -> Self {
        Self { at_ms, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    Proximity,
    Fever,
}

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::Proximity => "proximity",
            AlertKind::Fever => "fever",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub at_ms: u64,
    pub kind: AlertKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct ServoCommand<S> {
    #[serde(serialize_with = "json::serialize")]
    pub target_angle_deg: S,
}

/// Result of feeding one input into the firmware.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<S> {
    pub new_state: MaskState<S>,
    pub command: Option<ServoCommand<S>>,
    /// At most one alert per kind.
    pub alerts: Vec<Alert>,
}

impl<S: Scalar> StepOutput<S> {
    fn unchanged(state: &MaskState<S>) -> Self {
        Self {
            new_state: *state,
            command: None,
            alerts: Vec::new(),
        }
    }
}

/// Feeds one sensor event into the firmware.
///
/// Sensor values are totalized: negative distances, out-of-range angles and
/// implausible temperatures are clamped instead of rejected.
pub fn handle_event<S: Scalar>(
    state: &MaskState<S>,
    config: &DeviceConfig<S>,
    event: &SensorEvent<S>,
) -> StepOutput<S> {
    let now = event.at_ms;
    match event.kind {
        SensorKind::IrGesture => {
            if let Some(last) = state.last_gesture_ms {
                if now.saturating_sub(last) < config.gesture_refractory_ms {
                    return StepOutput::unchanged(state);
                }
            }
            let mut out = apply_toggle(state, config);
            out.new_state.last_gesture_ms = Some(now);
            out
        }
        SensorKind::PirMotion { distance_m } => {
            let mut next = *state;
            let alert = evaluate_proximity(&mut next, config, distance_m, now);
            StepOutput {
                new_state: next,
                command: None,
                alerts: alert.into_iter().collect(),
            }
        }
        SensorKind::Temperature { celsius } => {
            let mut next = *state;
            let alert = evaluate_temperature(&mut next, config, celsius, now);
            StepOutput {
                new_state: next,
                command: None,
                alerts: alert.into_iter().collect(),
            }
        }
        SensorKind::ServoPosition { angle_deg } => StepOutput {
            new_state: observe_servo(state, config, angle_deg),
            command: None,
            alerts: Vec::new(),
        },
    }
}

/// Where a toggle sends the mask: back over the face if it is (heading)
/// open, otherwise open.
///
/// Decided on the target rather than the instantaneous angle, so a toggle
/// during motion reverses it.
pub fn toggle_target<S: Scalar>(state: &MaskState<S>, config: &DeviceConfig<S>) -> S {
    if state.target_angle_deg == config.angle_open {
        config.angle_covering
    } else {
        config.angle_open
    }
}

/// Toggle without gesture debouncing, as issued by a remote client.
pub fn apply_toggle<S: Scalar>(state: &MaskState<S>, config: &DeviceConfig<S>) -> StepOutput<S> {
    let target = toggle_target(state, config);
    retarget(state, config, target)
}

/// Moves the mask to an arbitrary angle (the slider).
pub fn apply_set_angle<S: Scalar>(
    state: &MaskState<S>,
    config: &DeviceConfig<S>,
    angle: S,
) -> Result<StepOutput<S>, FirmwareError> {
    if !angle.within(angle_min(), angle_max()) {
        return Err(FirmwareError::OutOfRange {
            angle: angle.to_f64_lossy(),
        });
    }
    Ok(retarget(state, config, angle))
}

fn retarget<S: Scalar>(state: &MaskState<S>, config: &DeviceConfig<S>, target: S) -> StepOutput<S> {
    let command = (target != state.target_angle_deg).then_some(ServoCommand {
        target_angle_deg: target,
    });
    StepOutput {
        new_state: state.with_target(target, config),
        command,
        alerts: Vec::new(),
    }
}

/// Social distancing rule. Alerts when someone is within the threshold
/// (inclusive) and the proximity cooldown has elapsed; records the alert
/// time in `state`.
pub fn evaluate_proximity<S: Scalar>(
    state: &mut MaskState<S>,
    config: &DeviceConfig<S>,
    distance_m: S,
    now: u64,
) -> Option<Alert> {
    let distance = if distance_m < S::zero() { S::zero() } else { distance_m };
    if !(distance <= config.proximity_threshold_m) {
        return None;
    }
    if !cooled_down(state.last_proximity_alert_ms, now, config.alert_cooldown_ms) {
        return None;
    }
    state.last_proximity_alert_ms = Some(now);
    Some(Alert {
        at_ms: now,
        kind: AlertKind::Proximity,
        message: PROXIMITY_MESSAGE.to_string(),
    })
}

/// Fever rule, same cooldown mechanism as [`evaluate_proximity`].
pub fn evaluate_temperature<S: Scalar>(
    state: &mut MaskState<S>,
    config: &DeviceConfig<S>,
    celsius: S,
    now: u64,
) -> Option<Alert> {
    let (lo, hi) = TEMPERATURE_RANGE_C;
    let celsius = celsius.clamp_to(S::lit(lo), S::lit(hi));
    if !(celsius >= config.fever_threshold_c) {
        return None;
    }
    if !cooled_down(state.last_fever_alert_ms, now, config.alert_cooldown_ms) {
        return None;
    }
    state.last_fever_alert_ms = Some(now);
    Some(Alert {
        at_ms: now,
        kind: AlertKind::Fever,
        message: format!("high temperature {:.1} °C", celsius.to_f64_lossy()),
    })
}

fn cooled_down(last: Option<u64>, now: u64, cooldown_ms: u64) -> bool {
    match last {
        None => true,
        Some(last) => now.saturating_sub(last) >= cooldown_ms,
    }
}

/// Records servo position feedback.
pub fn observe_servo<S: Scalar>(state: &MaskState<S>, config: &DeviceConfig<S>, angle: S) -> MaskState<S> {
    let angle = angle.clamp_to(angle_min(), angle_max());
    let mut next = *state;
    next.current_angle_deg = angle;
    next.position = config.classify(angle, next.target_angle_deg);
    next
}
