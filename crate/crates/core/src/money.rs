//! Fixed-point US dollar amounts.
//!
//! Amounts are stored as an integer count of 10^-18 USD. Prices and rates are
//! quantized to 10^-9 USD when they enter the system, so the products that
//! appear in cost estimation (calls x per-call rate, bytes x per-GB rate / 10^9)
//! are always exact integers in this representation.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Base units per dollar.
pub const UNITS_PER_USD: i128 = 1_000_000_000_000_000_000;
/// Base units per nano-dollar, the resolution of every configured rate or price.
pub const UNITS_PER_NANO: i128 = 1_000_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum MoneyError {
    #[error("invalid decimal amount {0:?}")]
    Parse(String),
    #[error("amount {0} is not finite")]
    NotFinite(f64),
    #[error("amount {0:?} has more than 9 fractional digits")]
    TooPrecise(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Usd(i128);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub const fn from_units(units: i128) -> Self {
        Usd(units)
    }

    pub const fn units(self) -> i128 {
        self.0
    }

    pub const fn from_nanos(nanos: i64) -> Self {
        Usd(nanos as i128 * UNITS_PER_NANO)
    }

    pub const fn from_cents(cents: i64) -> Self {
        Usd(cents as i128 * (UNITS_PER_USD / 100))
    }

    /// Quantizes a binary float to the nearest nano-dollar.
    pub fn from_f64(value: f64) -> Result<Self, MoneyError> {
        if !value.is_finite() {
            return Err(MoneyError::NotFinite(value));
        }
        let nanos = (value * 1e9).round();
        Ok(Usd(nanos as i128 * UNITS_PER_NANO))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / UNITS_PER_USD as f64
    }

    /// Whole nano-dollars, truncating anything finer.
    pub fn nanos(self) -> i128 {
        self.0 / UNITS_PER_NANO
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn max(self, other: Usd) -> Usd {
        Usd(self.0.max(other.0))
    }

    pub fn checked_mul_int(self, k: i128) -> Option<Usd> {
        self.0.checked_mul(k).map(Usd)
    }

    /// Exact decimal rendering with at least `min_frac` fractional digits and
    /// no trailing zeros beyond that.
    pub fn to_decimal_string(self, min_frac: usize) -> String {
        let neg = self.0 < 0;
        let abs = self.0.unsigned_abs();
        let whole = abs / UNITS_PER_USD as u128;
        let frac = abs % UNITS_PER_USD as u128;
        let mut frac_str = format!("{frac:018}");
        while frac_str.len() > min_frac && frac_str.ends_with('0') {
            frac_str.pop();
        }
        let sign = if neg { "-" } else { "" };
        if frac_str.is_empty() {
            format!("{sign}{whole}")
        } else {
            format!("{sign}{whole}.{frac_str}")
        }
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string(2))
    }
}

impl FromStr for Usd {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
        let digits_ok = |p: &str| p.chars().all(|c| c.is_ascii_digit());
        if (whole.is_empty() && frac.is_empty()) || !digits_ok(whole) || !digits_ok(frac) {
            return Err(MoneyError::Parse(s.to_string()));
        }
        if frac.len() > 9 {
            return Err(MoneyError::TooPrecise(s.to_string()));
        }
        let whole_val: i128 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| MoneyError::Parse(s.to_string()))?
        };
        let mut frac_val: i128 = 0;
        for (i, c) in frac.chars().enumerate() {
            frac_val += (c as i128 - '0' as i128) * 10i128.pow(17 - i as u32);
        }
        let units = whole_val
            .checked_mul(UNITS_PER_USD)
            .and_then(|w| w.checked_add(frac_val))
            .ok_or_else(|| MoneyError::Parse(s.to_string()))?;
        Ok(Usd(if neg { -units } else { units }))
    }
}

impl Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl Sub for Usd {
    type Output = Usd;
    fn sub(self, rhs: Usd) -> Usd {
        Usd(self.0 - rhs.0)
    }
}

impl Mul<u64> for Usd {
    type Output = Usd;
    fn mul(self, rhs: u64) -> Usd {
        Usd(self.0 * rhs as i128)
    }
}

impl Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, Add::add)
    }
}

/// Serialized as an exact decimal string ("9.00").
impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string(2))
    }
}

/// Accepts either a decimal string or a JSON number.
impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Number(f64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Number(n) => Usd::from_f64(n).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats_exactly() {
        let v: Usd = "0.0000004".parse().unwrap();
        assert_eq!(v, Usd::from_nanos(400));
        assert_eq!(v.to_decimal_string(0), "0.0000004");
        assert_eq!("9".parse::<Usd>().unwrap().to_string(), "9.00");
        assert_eq!("-1.5".parse::<Usd>().unwrap().to_string(), "-1.50");
        assert_eq!(Usd::from_cents(1234).to_string(), "12.34");
    }

    #[test]
    fn rejects_garbage() {
        assert!("".parse::<Usd>().is_err());
        assert!("1.2.3".parse::<Usd>().is_err());
        assert!("abc".parse::<Usd>().is_err());
        assert!(matches!(
            "0.0000000001".parse::<Usd>(),
            Err(MoneyError::TooPrecise(_))
        ));
    }

    #[test]
    fn float_quantizes_to_nanos() {
        assert_eq!(Usd::from_f64(4e-7).unwrap(), Usd::from_nanos(400));
        assert_eq!(Usd::from_f64(0.12).unwrap(), Usd::from_nanos(120_000_000));
        assert!(Usd::from_f64(f64::NAN).is_err());
    }

    #[test]
    fn json_accepts_number_or_string() {
        let a: Usd = serde_json::from_str("1.25").unwrap();
        let b: Usd = serde_json::from_str("\"1.25\"").unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), "\"1.25\"");
    }
}
