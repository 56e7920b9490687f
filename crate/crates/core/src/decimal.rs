//! Two-decimal fixed-point values used for every reported percentage and
//! average.
//!
//! Rounding is half-up applied to the exact value of the `f64` quotient, so
//! `186213 / 40` (stored as 4655.32499999...) rounds to 4655.32, the same
//! figure a float-based report would print.

use std::fmt;

use serde::{Serialize, Serializer};

/// A non-negative quantity stored in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Centi(pub u64);

impl Centi {
    pub fn from_f64(x: f64) -> Self {
        Centi(round_half_up_hundredths(x))
    }

    /// `num / den` computed in `f64` and rounded to two decimals.
    pub fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            return Centi(0);
        }
        Self::from_f64(num as f64 / den as f64)
    }

    /// `100 * num / den` as a percentage.
    pub fn percent(num: u64, den: u64) -> Self {
        if den == 0 {
            return Centi(0);
        }
        Self::from_f64(num as f64 / den as f64 * 100.0)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Mean of already-rounded values, itself rounded.
    pub fn mean(values: &[Centi]) -> Centi {
        if values.is_empty() {
            return Centi(0);
        }
        let sum: u64 = values.iter().map(|c| c.0).sum();
        Centi::from_f64(sum as f64 / values.len() as f64 / 100.0)
    }
}

impl fmt::Display for Centi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// Serialized as a JSON number with exactly two fractional digits.
impl Serialize for Centi {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(self.to_string())
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for Centi {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Ok(Centi::from_f64(v))
    }
}

/// floor(x * 100 + 1/2) evaluated exactly on the binary value of `x`.
/// Negative and non-finite inputs clamp to zero.
fn round_half_up_hundredths(x: f64) -> u64 {
    if !x.is_finite() || x <= 0.0 {
        return 0;
    }
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    let m = u128::from(mantissa) * 100;
    if exp >= 0 {
        return if exp >= 64 {
            u64::MAX
        } else {
            u64::try_from(m << exp).unwrap_or(u64::MAX)
        };
    }
    let shift = (-exp) as u32;
    // m < 2^60, so once the shift reaches 62 the value is below one half.
    if shift >= 62 {
        return 0;
    }
    // floor((m + 2^(shift-1)) / 2^shift)
    ((m + (1u128 << (shift - 1))) >> shift) as u64
}
