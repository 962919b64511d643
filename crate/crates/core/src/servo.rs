//! SG-90 style hobby servo: slew-rate limited motion and the PWM pulse
//! mapping.

use thiserror::Error;

use crate::scalar::{angle_max, angle_min, Scalar};

/// 0.1 s per 60° at no load.
pub const DEFAULT_SLEW_RATE_DEG_PER_S: i64 = 600;
pub const DEFAULT_MIN_PULSE_US: i64 = 500;
pub const DEFAULT_MAX_PULSE_US: i64 = 2500;
/// Standard hobby servo frame rate.
pub const PWM_FREQUENCY_HZ: u32 = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServoError {
    #[error("angle {0} is outside [0, 180]")]
    OutOfRange(f64),
    #[error("slew rate must be > 0, got {0}")]
    SlewRate(f64),
    #[error("pulse range must satisfy min < max, got {min}..{max}")]
    PulseRange { min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoModel<S> {
    pub current_angle_deg: S,
    pub target_angle_deg: S,
    pub slew_rate_deg_per_s: S,
    pub min_pulse_us: S,
    pub max_pulse_us: S,
}

impl<S: Scalar> Default for ServoModel<S> {
    fn default() -> Self {
        Self {
            current_angle_deg: S::zero(),
            target_angle_deg: S::zero(),
            slew_rate_deg_per_s: S::lit(DEFAULT_SLEW_RATE_DEG_PER_S),
            min_pulse_us: S::lit(DEFAULT_MIN_PULSE_US),
            max_pulse_us: S::lit(DEFAULT_MAX_PULSE_US),
        }
    }
}

impl<S: Scalar> ServoModel<S> {
    /// Default SG-90 parameters, at rest at `angle`.
    pub fn at_rest(angle: S) -> Result<Self, ServoError> {
        Self {
            current_angle_deg: angle,
            target_angle_deg: angle,
            ..Self::default()
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, ServoError> {
        check_angle(self.current_angle_deg)?;
        check_angle(self.target_angle_deg)?;
        if !(self.slew_rate_deg_per_s > S::zero()) {
            return Err(ServoError::SlewRate(self.slew_rate_deg_per_s.to_f64_lossy()));
        }
        if !(self.min_pulse_us < self.max_pulse_us) {
            return Err(ServoError::PulseRange {
                min: self.min_pulse_us.to_f64_lossy(),
                max: self.max_pulse_us.to_f64_lossy(),
            });
        }
        Ok(self)
    }

    pub fn is_settled(&self) -> bool {
        self.current_angle_deg == self.target_angle_deg
    }

    /// Commands a new target; out-of-range targets are clamped.
    pub fn command(&mut self, target: S) {
        self.target_angle_deg = target.clamp_to(angle_min(), angle_max());
    }

    /// Advances the shaft `dt_ms` milliseconds toward the target. Never
    /// overshoots; lands exactly on the target once within reach.
    pub fn step(&self, dt_ms: u64) -> Self {
        let reach = self.slew_rate_deg_per_s * S::from_u64(dt_ms).expect("dt fits the scalar type")
            / S::lit(1000);
        let delta = self.target_angle_deg - self.current_angle_deg;
        let mut next = *self;
        next.current_angle_deg = if delta.abs() <= reach {
            self.target_angle_deg
        } else {
            self.current_angle_deg + delta.signum() * reach
        };
        next
    }

    /// Pulse width for `angle`, linear between the pulse endpoints.
    pub fn pulse_width_us(&self, angle: S) -> Result<S, ServoError> {
        check_angle(angle)?;
        Ok(self.min_pulse_us + angle / angle_max::<S>() * (self.max_pulse_us - self.min_pulse_us))
    }

    /// Number of `tick_ms` steps needed for a full 0..180 sweep.
    pub fn full_sweep_ticks(&self, tick_ms: u64) -> u64 {
        let per_tick = self.slew_rate_deg_per_s.to_f64_lossy() * tick_ms as f64 / 1000.0;
        (180.0 / per_tick).ceil() as u64
    }
}

fn check_angle<S: Scalar>(angle: S) -> Result<(), ServoError> {
    if angle.within(angle_min(), angle_max()) {
        Ok(())
    } else {
        Err(ServoError::OutOfRange(angle.to_f64_lossy()))
    }
}
