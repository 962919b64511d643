//! Numeric abstraction shared by the firmware and the simulator.
//!
//! All angle, distance and temperature arithmetic is written against
//! [`Scalar`], so the same state machine runs on `f32` (what the
//! microcontroller would use), `f64` (the default for the simulator and the
//! wire protocol) or an exact rational type in tests.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Number type usable for angles, distances and temperatures.
///
/// Blanket-implemented for anything that is a signed, ordered number and can
/// be converted from and to the primitive types.
pub trait Scalar:
    Num + Signed + PartialOrd + Copy + Debug + FromPrimitive + ToPrimitive + 'static
{
    /// Converts an integer literal. Panics only for types that cannot
    /// represent small integers, which no supported type does.
    fn lit(value: i64) -> Self {
        Self::from_i64(value).expect("scalar type cannot represent a small integer")
    }

    /// Converts a floating point configuration value.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("scalar type cannot represent a finite f64")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Clamps into `[lo, hi]`. Values that compare false against both bounds
    /// (NaN) end up at `lo`.
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        if !(self >= lo) {
            lo
        } else if self > hi {
            hi
        } else {
            self
        }
    }

    /// True if `self` lies in `[lo, hi]`. NaN is never in range.
    fn within(self, lo: Self, hi: Self) -> bool {
        self >= lo && self <= hi
    }
}

impl<T> Scalar for T where
    T: Num + Signed + PartialOrd + Copy + Debug + FromPrimitive + ToPrimitive + 'static
{
}

/// Lowest valid servo angle in degrees.
pub fn angle_min<S: Scalar>() -> S {
    S::zero()
}

/// Highest valid servo angle in degrees.
pub fn angle_max<S: Scalar>() -> S {
    S::lit(180)
}

pub(crate) mod json {
    //! Number formatting for the JSON surfaces. Integral values are written
    //! without a fractional part (`90`, not `90.0`) so transcripts and frames
    //! stay readable and byte-stable.

    use serde::Serializer;

    use super::Scalar;

    pub fn number(value: f64) -> serde_json::Value {
        if value.fract() == 0.0 && value.abs() < 9.0e15 {
            serde_json::Value::from(value as i64)
        } else {
            serde_json::Number::from_f64(value)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null)
        }
    }

    pub fn serialize<S: Scalar, Ser: Serializer>(value: &S, ser: Ser) -> Result<Ser::Ok, Ser::Error> {
        let v = value.to_f64_lossy();
        if v.fract() == 0.0 && v.abs() < 9.0e15 {
            ser.serialize_i64(v as i64)
        } else {
            ser.serialize_f64(v)
        }
    }

    pub fn serialize_opt<S: Scalar, Ser: Serializer>(
        value: &Option<S>,
        ser: Ser,
    ) -> Result<Ser::Ok, Ser::Error> {
        match value {
            Some(v) => serialize(v, ser),
            None => ser.serialize_none(),
        }
    }
}
