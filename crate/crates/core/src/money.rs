//! Currency amounts in ringgit, stored as integer sen.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An amount in Malaysian ringgit held as minor units (sen).
///
/// On the wire an amount is a JSON number in major units (`1000.00`). The
/// canonical serializer renders it with exactly two fractional digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_sen(sen: i64) -> Self {
        Money(sen)
    }

    pub const fn from_ringgit(rm: i64) -> Self {
        Money(rm * 100)
    }

    pub const fn sen(self) -> i64 {
        self.0
    }

    /// Converts a major-unit float, rounding to the nearest sen.
    pub fn from_major_f64(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        let sen = (value * 100.0).round();
        if sen.abs() > i64::MAX as f64 / 2.0 {
            return None;
        }
        Some(Money(sen as i64))
    }

    pub fn to_major_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// Two-decimal rendering without currency prefix, e.g. `1000.00`.
    pub fn decimal_string(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        format!("{sign}{}.{:02}", abs / 100, abs % 100)
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl fmt::Display for Money {
    /// `RM1,000.00` style.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plain = self.decimal_string();
        let (sign, rest) = match plain.strip_prefix('-') {
            Some(r) => ("-", r),
            None => ("", plain.as_str()),
        };
        let (int, frac) = rest.split_once('.').unwrap_or((rest, "00"));
        let mut grouped = String::new();
        for (i, ch) in int.chars().enumerate() {
            if i > 0 && (int.len() - i) % 3 == 0 {
                grouped.push(',');
            }
            grouped.push(ch);
        }
        write!(f, "{sign}RM{grouped}.{frac}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid amount: {0}")]
pub struct ParseMoneyError(String);

impl FromStr for Money {
    type Err = ParseMoneyError;

    /// Accepts `500`, `500.5`, `1,000.00`, with an optional `RM` prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMoneyError(s.to_string());
        let mut t = s.trim();
        if t.len() >= 2 && t[..2].eq_ignore_ascii_case("rm") {
            t = t[2..].trim_start();
        }
        let (negative, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let cleaned: String = t.chars().filter(|c| *c != ',').collect();
        if cleaned.is_empty() {
            return Err(err());
        }
        let (int, frac) = match cleaned.split_once('.') {
            Some((i, f)) => (i, f),
            None => (cleaned.as_str(), ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 2
        {
            return Err(err());
        }
        let int_val: i64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| err())?
        };
        let frac_val: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| err())? * 10,
            _ => frac.parse().map_err(|_| err())?,
        };
        let sen = int_val
            .checked_mul(100)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(err)?;
        Ok(Money(if negative { -sen } else { sen }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_major_f64())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Money::from_major_f64(v)
                .ok_or_else(|| serde::de::Error::custom("amount out of range")),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_forms() {
        assert_eq!("RM1000".parse::<Money>().unwrap(), Money::from_sen(100_000));
        assert_eq!("RM 1,000.00".parse::<Money>().unwrap(), Money::from_sen(100_000));
        assert_eq!("500".parse::<Money>().unwrap(), Money::from_sen(50_000));
        assert_eq!("45.5".parse::<Money>().unwrap(), Money::from_sen(4_550));
        assert_eq!("rm-5".parse::<Money>().unwrap(), Money::from_sen(-500));
        assert!("12.345".parse::<Money>().is_err());
        assert!("RM".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
    }

    #[test]
    fn display_groups_thousands() {
        assert_eq!(Money::from_sen(100_000).to_string(), "RM1,000.00");
        assert_eq!(Money::from_sen(123_456_789).to_string(), "RM1,234,567.89");
        assert_eq!(Money::from_sen(5).to_string(), "RM0.05");
        assert_eq!(Money::from_sen(-25_000).to_string(), "-RM250.00");
    }

    #[test]
    fn json_uses_major_units() {
        let m: Money = serde_json::from_str("1000.00").unwrap();
        assert_eq!(m.sen(), 100_000);
        let m: Money = serde_json::from_str("\"RM 12.30\"").unwrap();
        assert_eq!(m.sen(), 1_230);
        assert_eq!(serde_json::to_string(&Money::from_sen(50_000)).unwrap(), "500.0");
    }
}
