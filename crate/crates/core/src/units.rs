//! Unit-suffixed quantities used in scenario files.
//!
//! Everything is parsed into canonical integers: bytes, nanoseconds,
//! bytes/second and events/second. Decimal prefixes are powers of 1000
//! (`16GB/s` is 16e9 B/s); binary prefixes (`KiB`, `MiB`, ...) are powers of 1024.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("empty quantity")]
    Empty,
    #[error("invalid number in {0:?}")]
    BadNumber(String),
    #[error("unknown unit {unit:?} in {input:?} (expected one of {expected})")]
    UnknownUnit {
        input: String,
        unit: String,
        expected: &'static str,
    },
    #[error("{0:?} does not resolve to a whole number of base units")]
    Fractional(String),
    #[error("{0:?} overflows")]
    Overflow(String),
}

const BYTE_UNITS: &[(&str, u64)] = &[
    ("TiB", 1 << 40),
    ("GiB", 1 << 30),
    ("MiB", 1 << 20),
    ("KiB", 1 << 10),
    ("TB", 1_000_000_000_000),
    ("GB", 1_000_000_000),
    ("MB", 1_000_000),
    ("KB", 1_000),
    ("kB", 1_000),
    ("B", 1),
];

const TIME_UNITS: &[(&str, u64)] = &[
    ("ns", 1),
    ("us", 1_000),
    ("µs", 1_000),
    ("ms", 1_000_000),
    ("s", 1_000_000_000),
];

const RATE_UNITS: &[(&str, u64)] = &[
    ("G", 1_000_000_000),
    ("M", 1_000_000),
    ("K", 1_000),
    ("k", 1_000),
    ("", 1),
];

/// Splits `"1.5GB"` into `("1.5", "GB")`.
fn split_number(input: &str) -> Result<(&str, &str), UnitError> {
    let s = input.trim();
    if s.is_empty() {
        return Err(UnitError::Empty);
    }
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '_'))
        .unwrap_or(s.len());
    if end == 0 {
        return Err(UnitError::BadNumber(input.to_string()));
    }
    Ok((&s[..end], s[end..].trim()))
}

/// Multiplies a decimal literal by an integer scale without floating point.
fn scale_decimal(input: &str, number: &str, scale: u64) -> Result<u64, UnitError> {
    let number: String = number.chars().filter(|c| *c != '_').collect();
    let (int_part, frac_part) = match number.split_once('.') {
        Some((i, f)) => (i, f),
        None => (number.as_str(), ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(UnitError::BadNumber(input.to_string()));
    }
    if frac_part.contains('.') {
        return Err(UnitError::BadNumber(input.to_string()));
    }
    let digits = format!("{int_part}{frac_part}");
    let mantissa: u128 = digits
        .parse()
        .map_err(|_| UnitError::BadNumber(input.to_string()))?;
    let denom = 10u128
        .checked_pow(frac_part.len() as u32)
        .ok_or_else(|| UnitError::Overflow(input.to_string()))?;
    let scaled = mantissa
        .checked_mul(u128::from(scale))
        .ok_or_else(|| UnitError::Overflow(input.to_string()))?;
    if scaled % denom != 0 {
        return Err(UnitError::Fractional(input.to_string()));
    }
    u64::try_from(scaled / denom).map_err(|_| UnitError::Overflow(input.to_string()))
}

fn parse_with(
    input: &str,
    table: &[(&str, u64)],
    default_unit: Option<u64>,
    expected: &'static str,
) -> Result<u64, UnitError> {
    let (number, unit) = split_number(input)?;
    if unit.is_empty() {
        if let Some(scale) = default_unit {
            return scale_decimal(input, number, scale);
        }
    }
    for (name, scale) in table {
        if unit == *name {
            return scale_decimal(input, number, *scale);
        }
    }
    Err(UnitError::UnknownUnit {
        input: input.to_string(),
        unit: unit.to_string(),
        expected,
    })
}

fn format_with(value: u64, table: &[(&str, u64)], fallback: &str) -> String {
    for (name, scale) in table {
        if *scale > 1 && value >= *scale && value.is_multiple_of(*scale) {
            return format!("{}{}", value / scale, name);
        }
    }
    format!("{value}{fallback}")
}

macro_rules! quantity {
    ($name:ident, $what:literal) => {
        impl $name {
            pub const fn get(self) -> u64 {
                self.0
            }
        }

        impl From<u64> for $name {
            fn from(v: u64) -> Self {
                $name(v)
            }
        }

        impl FromStr for $name {
            type Err = UnitError;

            fn from_str(s: &str) -> Result<Self, UnitError> {
                Self::parse(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $name;

                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        f.write_str($what)
                    }

                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        $name::parse(v).map_err(E::custom)
                    }

                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$name, E> {
                        Ok($name(v))
                    }

                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$name, E> {
                        u64::try_from(v)
                            .map($name)
                            .map_err(|_| E::custom("quantity must be non-negative"))
                    }
                }
                deserializer.deserialize_any(V)
            }
        }
    };
}

/// A byte count, e.g. `512B`, `16KiB`, `1GB`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bytes(pub u64);

impl Bytes {
    pub fn parse(s: &str) -> Result<Self, UnitError> {
        parse_with(s, BYTE_UNITS, None, "B, KB, MB, GB, TB, KiB, MiB, GiB, TiB").map(Bytes)
    }
}

impl fmt::Display for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("0B");
        }
        f.write_str(&format_with(self.0, BYTE_UNITS, "B"))
    }
}

quantity!(Bytes, "a byte size such as \"512B\" or \"16KiB\"");

/// A duration in nanoseconds, e.g. `32ns`, `64us`, `10ms`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nanos(pub u64);

impl Nanos {
    pub fn parse(s: &str) -> Result<Self, UnitError> {
        parse_with(s, TIME_UNITS, None, "ns, us, µs, ms, s").map(Nanos)
    }
}

impl fmt::Display for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("0ns");
        }
        let table = [("s", 1_000_000_000), ("ms", 1_000_000), ("us", 1_000)];
        f.write_str(&format_with(self.0, &table, "ns"))
    }
}

quantity!(Nanos, "a duration such as \"64us\" or \"100ns\"");

/// Bandwidth in bytes/second, e.g. `16GB/s`. The `/s` suffix is optional.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bandwidth(pub u64);

impl Bandwidth {
    pub fn parse(s: &str) -> Result<Self, UnitError> {
        let trimmed = s.trim();
        let body = trimmed.strip_suffix("/s").unwrap_or(trimmed);
        let (_, unit) = split_number(body)?;
        if unit.contains("iB") {
            return Err(UnitError::UnknownUnit {
                input: s.to_string(),
                unit: unit.to_string(),
                expected: "decimal units (B/s, KB/s, MB/s, GB/s, TB/s)",
            });
        }
        parse_with(body, BYTE_UNITS, None, "B/s, KB/s, MB/s, GB/s, TB/s").map(Bandwidth)
    }

    pub fn gb_per_s(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("0B/s");
        }
        let table = [
            ("TB", 1_000_000_000_000),
            ("GB", 1_000_000_000),
            ("MB", 1_000_000),
            ("KB", 1_000),
        ];
        write!(f, "{}/s", format_with(self.0, &table, "B"))
    }
}

quantity!(Bandwidth, "a bandwidth such as \"16GB/s\"");

/// Events per second, e.g. `1M/s` or a bare integer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(pub u64);

impl Rate {
    pub fn parse(s: &str) -> Result<Self, UnitError> {
        let trimmed = s.trim();
        let body = trimmed.strip_suffix("/s").unwrap_or(trimmed);
        parse_with(body, RATE_UNITS, Some(1), "K/s, M/s, G/s").map(Rate)
    }

    /// Interval between consecutive events in picoseconds.
    pub fn interval_ps(self) -> u64 {
        1_000_000_000_000u64.div_ceil(self.0.max(1))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let table = [("G", 1_000_000_000), ("M", 1_000_000), ("K", 1_000)];
        write!(f, "{}/s", format_with(self.0, &table, ""))
    }
}

quantity!(Rate, "a rate such as \"1M/s\"");

/// Human-readable bandwidth for reports, e.g. `15.52 GB/s`.
pub fn pretty_bandwidth(bytes_per_s: f64) -> String {
    let (scale, unit) = if bytes_per_s >= 1e9 {
        (1e9, "GB/s")
    } else if bytes_per_s >= 1e6 {
        (1e6, "MB/s")
    } else if bytes_per_s >= 1e3 {
        (1e3, "KB/s")
    } else {
        (1.0, "B/s")
    };
    format!("{:.2} {}", bytes_per_s / scale, unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_quoted_quantities() {
        assert_eq!(Bandwidth::parse("16GB/s").unwrap(), Bandwidth(16_000_000_000));
        assert_eq!(Bandwidth::parse("1555GB").unwrap(), Bandwidth(1_555_000_000_000));
        assert_eq!(Bandwidth::parse("1.2GB/s").unwrap(), Bandwidth(1_200_000_000));
        assert_eq!(Nanos::parse("64us").unwrap(), Nanos(64_000));
        assert_eq!(Nanos::parse("64µs").unwrap(), Nanos(64_000));
        assert_eq!(Nanos::parse("32 ns").unwrap(), Nanos(32));
        assert_eq!(Bytes::parse("512B").unwrap(), Bytes(512));
        assert_eq!(Bytes::parse("16KiB").unwrap(), Bytes(16_384));
        assert_eq!(Bytes::parse("1GB").unwrap(), Bytes(1_000_000_000));
        assert_eq!(Rate::parse("1M/s").unwrap(), Rate(1_000_000));
        assert_eq!(Rate::parse("250000").unwrap(), Rate(250_000));
    }

    #[test]
    fn rejects_bad_units_and_fractions() {
        assert!(matches!(Bytes::parse("512"), Err(UnitError::UnknownUnit { .. })));
        assert!(matches!(Nanos::parse("5 fortnights"), Err(UnitError::UnknownUnit { .. })));
        assert!(matches!(Nanos::parse("1.5ns"), Err(UnitError::Fractional(_))));
        assert!(matches!(Bandwidth::parse("16GiB/s"), Err(UnitError::UnknownUnit { .. })));
        assert!(matches!(Bytes::parse("GB"), Err(UnitError::BadNumber(_))));
        assert!(matches!(Bytes::parse(""), Err(UnitError::Empty)));
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(Bytes(16_384).to_string(), "16KiB");
        assert_eq!(Bytes(4_000).to_string(), "4KB");
        assert_eq!(Bytes(513).to_string(), "513B");
        assert_eq!(Nanos(64_000).to_string(), "64us");
        assert_eq!(Bandwidth(1_200_000_000).to_string(), "1200MB/s");
        assert_eq!(Rate(1_000_000).to_string(), "1M/s");
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(v in 0u64..(1u64 << 50)) {
            prop_assert_eq!(Bytes::parse(&Bytes(v).to_string()).unwrap(), Bytes(v));
            prop_assert_eq!(Nanos::parse(&Nanos(v).to_string()).unwrap(), Nanos(v));
            prop_assert_eq!(Bandwidth::parse(&Bandwidth(v).to_string()).unwrap(), Bandwidth(v));
            prop_assert_eq!(Rate::parse(&Rate(v).to_string()).unwrap(), Rate(v));
        }
    }
}
