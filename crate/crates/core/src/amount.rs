//! Fixed-point currency amounts.
//!
//! One coin is 10^8 base units. Every balance, price, and payout in the
//! system is a non-negative integer count of base units; arithmetic is exact
//! and checked, and floating point never touches a balance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::{Canonical, CanonicalDecode, CanonicalReader, CanonicalWriter, CodecError};

pub const BASE_UNITS_PER_COIN: u64 = 100_000_000;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Amount(u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub const fn from_base_units(units: u64) -> Amount {
        Amount(units)
    }

    /// Whole coins, for fixtures and genesis allocations. Panics on overflow,
    /// which cannot happen for any supply this simulator issues.
    pub fn from_coins(coins: u64) -> Amount {
        Amount(coins.checked_mul(BASE_UNITS_PER_COIN).expect("coin count overflows"))
    }

    pub const fn base_units(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: Amount) -> Option<Amount> {
        self.0.checked_add(other.0).map(Amount)
    }

    pub fn checked_sub(self, other: Amount) -> Option<Amount> {
        self.0.checked_sub(other.0).map(Amount)
    }

    /// Sums an iterator with overflow detection.
    pub fn checked_sum<I: IntoIterator<Item = Amount>>(iter: I) -> Option<Amount> {
        iter.into_iter().try_fold(Amount::ZERO, Amount::checked_add)
    }

    /// Parses a decimal coin amount such as "0.4" or "11" exactly, with at
    /// most eight fractional digits.
    pub fn parse_decimal(text: &str) -> Result<Amount, AmountError> {
        let (whole, frac) = match text.split_once('.') {
            Some((w, f)) => (w, f),
            None => (text, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return Err(AmountError::BadFormat);
        }
        if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(AmountError::BadFormat);
        }
        if frac.len() > 8 {
            return Err(AmountError::TooManyFractionDigits(frac.len()));
        }

        let whole_units = if whole.is_empty() {
            0
        } else {
            whole.parse::<u64>().map_err(|_| AmountError::Overflow)?
        };
        let mut frac_units = 0u64;
        if !frac.is_empty() {
            // Right-pad to eight digits: "4" means 0.4, i.e. 40_000_000 units.
            frac_units = frac.parse::<u64>().map_err(|_| AmountError::BadFormat)?;
            for _ in frac.len()..8 {
                frac_units *= 10;
            }
        }

        whole_units
            .checked_mul(BASE_UNITS_PER_COIN)
            .and_then(|w| w.checked_add(frac_units))
            .map(Amount)
            .ok_or(AmountError::Overflow)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AmountError {
    #[error("amount is not a plain decimal number")]
    BadFormat,
    #[error("amount has {0} fractional digits, the maximum is 8")]
    TooManyFractionDigits(usize),
    #[error("amount does not fit in 64-bit base units")]
    Overflow,
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / BASE_UNITS_PER_COIN;
        let frac = self.0 % BASE_UNITS_PER_COIN;
        if frac == 0 {
            return write!(f, "{whole}");
        }
        let digits = format!("{frac:08}");
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Amount({self})")
    }
}

impl FromStr for Amount {
    type Err = AmountError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Amount::parse_decimal(s)
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Amount::parse_decimal(&text).map_err(serde::de::Error::custom)
    }
}

impl Canonical for Amount {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_u64(self.0);
    }
}

impl CanonicalDecode for Amount {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        Ok(Amount(r.take_u64()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_whole_and_fractional() {
        assert_eq!(Amount::parse_decimal("0.4").unwrap().base_units(), 40_000_000);
        assert_eq!(Amount::parse_decimal("1.1").unwrap().base_units(), 110_000_000);
        assert_eq!(Amount::parse_decimal("11").unwrap().base_units(), 1_100_000_000);
        assert_eq!(Amount::parse_decimal("0.00000001").unwrap().base_units(), 1);
        assert_eq!(Amount::parse_decimal(".5").unwrap().base_units(), 50_000_000);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(Amount::parse_decimal(""), Err(AmountError::BadFormat));
        assert_eq!(Amount::parse_decimal("."), Err(AmountError::BadFormat));
        assert_eq!(Amount::parse_decimal("-1"), Err(AmountError::BadFormat));
        assert_eq!(Amount::parse_decimal("1.2.3"), Err(AmountError::BadFormat));
        assert_eq!(Amount::parse_decimal("1e8"), Err(AmountError::BadFormat));
        assert_eq!(
            Amount::parse_decimal("0.123456789"),
            Err(AmountError::TooManyFractionDigits(9))
        );
        assert_eq!(Amount::parse_decimal("999999999999999999999"), Err(AmountError::Overflow));
    }

    #[test]
    fn display_round_trips() {
        for text in ["0", "0.4", "1.1", "11", "0.00000001", "21000000"] {
            let amount = Amount::parse_decimal(text).unwrap();
            assert_eq!(amount.to_string(), text);
            assert_eq!(Amount::parse_decimal(&amount.to_string()).unwrap(), amount);
        }
    }

    #[test]
    fn checked_arithmetic() {
        let a = Amount::from_base_units(u64::MAX);
        assert_eq!(a.checked_add(Amount::from_base_units(1)), None);
        assert_eq!(Amount::ZERO.checked_sub(Amount::from_base_units(1)), None);
        assert_eq!(
            Amount::checked_sum([Amount::from_coins(1), Amount::from_coins(2)]),
            Some(Amount::from_coins(3))
        );
        assert_eq!(Amount::checked_sum([a, a]), None);
    }
}
