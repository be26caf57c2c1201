//! Calendar months and month-keyed series.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// A calendar month. Ordering is chronological.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    year: i32,
    month: u32,
}

/// A real-valued series keyed by month.
pub type MonthSeries = BTreeMap<Month, f64>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid month `{0}` (expected YYYY-MM)")]
pub struct ParseMonthError(pub String);

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("month is validated")
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Signed number of calendar months from `self` to `later`.
    pub fn months_until(self, later: Month) -> i64 {
        (later.year as i64 - self.year as i64) * 12 + later.month as i64 - self.month as i64
    }

    /// Every month from `first` to `last`, inclusive. Empty if `last < first`.
    pub fn range_inclusive(first: Month, last: Month) -> Vec<Month> {
        let mut out = Vec::new();
        let mut m = first;
        while m <= last {
            out.push(m);
            m = m.succ();
        }
        out
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = ParseMonthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMonthError(s.to_string());
        let (y, m) = s.trim().split_once('-').ok_or_else(err)?;
        if y.len() != 4 || m.is_empty() || m.len() > 2 {
            return Err(err());
        }
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        Month::new(year, month).ok_or_else(err)
    }
}

/// Inclusive span of months covered by a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonthRange {
    pub first: Month,
    pub last: Month,
}

impl MonthRange {
    pub fn new(first: Month, last: Month) -> Self {
        assert!(first <= last, "month range must not be inverted");
        Self { first, last }
    }

    /// Smallest range covering all `dates`, or `None` for no dates.
    pub fn covering<I: IntoIterator<Item = NaiveDate>>(dates: I) -> Option<Self> {
        let mut iter = dates.into_iter().map(Month::of);
        let first = iter.next()?;
        let (lo, hi) = iter.fold((first, first), |(lo, hi), m| (lo.min(m), hi.max(m)));
        Some(Self {
            first: lo,
            last: hi,
        })
    }

    pub fn months(&self) -> Vec<Month> {
        Month::range_inclusive(self.first, self.last)
    }

    pub fn len(&self) -> usize {
        self.first.months_until(self.last) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let m: Month = "2010-03".parse().unwrap();
        assert_eq!(m.to_string(), "2010-03");
        assert!("2010-13".parse::<Month>().is_err());
        assert!("2010".parse::<Month>().is_err());
        assert!("10-03".parse::<Month>().is_err());
    }

    #[test]
    fn succ_wraps_year() {
        let m = Month::new(2011, 12).unwrap();
        assert_eq!(m.succ(), Month::new(2012, 1).unwrap());
        assert_eq!(m.months_until(Month::new(2013, 2).unwrap()), 14);
    }

    #[test]
    fn range_covers_endpoints() {
        let r = MonthRange::new(Month::new(2020, 11).unwrap(), Month::new(2021, 2).unwrap());
        let ms: Vec<String> = r.months().iter().map(|m| m.to_string()).collect();
        assert_eq!(ms, ["2020-11", "2020-12", "2021-01", "2021-02"]);
        assert_eq!(r.len(), 4);
    }
}
