use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month {month} out of 1..=12")));
        }
        Ok(Month { year, month })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(n: i64) -> Self {
        Month {
            year: n.div_euclid(12) as i32,
            month: (n.rem_euclid(12) + 1) as u32,
        }
    }

    /// Signed number of months from `origin` to `self`.
    pub fn months_since(self, origin: Month) -> i64 {
        self.ordinal() - origin.ordinal()
    }

    pub fn plus(self, months: i64) -> Month {
        Month::from_ordinal(self.ordinal() + months)
    }

    /// `count` consecutive months starting at `self`.
    pub fn range(self, count: usize) -> Vec<Month> {
        (0..count as i64).map(|i| self.plus(i)).collect()
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("bad month {s:?}, expected YYYY-MM")))?;
        let year = y
            .parse::<i32>()
            .map_err(|_| Error::invalid(format!("bad year in {s:?}")))?;
        let month = m
            .parse::<u32>()
            .map_err(|_| Error::invalid(format!("bad month in {s:?}")))?;
        Month::new(year, month)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
