use std::fmt;
use std::ops::{Add, Sub};

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes per market period.
pub const QUARTER_MINUTES: i64 = 15;
const QUARTER_SECONDS: i64 = QUARTER_MINUTES * 60;

/// A UTC market period, counted in quarter-hours since 1970-01-01T00:00Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuarterIndex(i64);

impl QuarterIndex {
    pub const fn new(epoch_quarter: i64) -> Self {
        QuarterIndex(epoch_quarter)
    }

    pub const fn epoch_quarter(self) -> i64 {
        self.0
    }

    pub fn from_datetime(dt: DateTime<Utc>) -> Result<Self> {
        let secs = dt.timestamp();
        if dt.nanosecond() != 0 || secs.rem_euclid(QUARTER_SECONDS) != 0 {
            return Err(Error::Alignment {
                timestamp: dt.to_rfc3339(),
            });
        }
        Ok(QuarterIndex(secs.div_euclid(QUARTER_SECONDS)))
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.0 * QUARTER_SECONDS, 0)
            .single()
            .expect("quarter index within chrono range")
    }

    /// First quarter of a calendar day.
    pub fn from_date(date: NaiveDate) -> Self {
        let dt = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        QuarterIndex(dt.timestamp().div_euclid(QUARTER_SECONDS))
    }

    /// Accepts RFC 3339 timestamps and the short `YYYY-MM-DDTHH:MMZ` form.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let dt = match DateTime::parse_from_rfc3339(s) {
            Ok(dt) => dt.with_timezone(&Utc),
            Err(_) => NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%MZ")
                .map(|n| n.and_utc())
                .map_err(|_| Error::Value(format!("unparseable timestamp `{s}`")))?,
        };
        Self::from_datetime(dt)
    }

    pub fn date(self) -> NaiveDate {
        self.to_datetime().date_naive()
    }

    /// First quarter of the calendar month containing `self`.
    pub fn month_start(self) -> QuarterIndex {
        let d = self.date();
        QuarterIndex::from_date(NaiveDate::from_ymd_opt(d.year(), d.month(), 1).expect("valid"))
    }

    /// Shift by whole calendar months, landing on the first quarter of the target month.
    pub fn add_months(self, months: i32) -> QuarterIndex {
        let d = self.date();
        let total = d.year() * 12 + d.month0() as i32 + months;
        let date =
            NaiveDate::from_ymd_opt(total.div_euclid(12), total.rem_euclid(12) as u32 + 1, 1)
                .expect("valid month");
        QuarterIndex::from_date(date)
    }

    pub fn minute_of_day(self) -> u32 {
        let dt = self.to_datetime();
        dt.hour() * 60 + dt.minute()
    }
}

impl Add<i64> for QuarterIndex {
    type Output = QuarterIndex;
    fn add(self, rhs: i64) -> QuarterIndex {
        QuarterIndex(self.0 + rhs)
    }
}

impl Sub<i64> for QuarterIndex {
    type Output = QuarterIndex;
    fn sub(self, rhs: i64) -> QuarterIndex {
        QuarterIndex(self.0 - rhs)
    }
}

impl Sub for QuarterIndex {
    type Output = i64;
    fn sub(self, rhs: QuarterIndex) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for QuarterIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

/// Half-open range of quarters `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuarterSpan {
    pub start: QuarterIndex,
    pub end: QuarterIndex,
}

impl QuarterSpan {
    pub fn new(start: QuarterIndex, end: QuarterIndex) -> Self {
        QuarterSpan { start, end }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, q: QuarterIndex) -> bool {
        self.start <= q && q < self.end
    }

    pub fn covers(&self, other: &QuarterSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = QuarterIndex> {
        (self.start.0..self.end.0).map(QuarterIndex)
    }
}

impl fmt::Display for QuarterSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let q = QuarterIndex::parse("2018-01-08T12:00:00Z").unwrap();
        assert_eq!(q.to_string(), "2018-01-08T12:00:00Z");
        assert_eq!(QuarterIndex::parse("2018-01-08T12:00Z").unwrap(), q);
        assert_eq!(QuarterIndex::parse("2018-01-08T13:00:00+01:00").unwrap(), q);
        assert_eq!((q + 1).to_string(), "2018-01-08T12:15:00Z");
    }

    #[test]
    fn epoch_is_zero() {
        assert_eq!(
            QuarterIndex::parse("1970-01-01T00:00:00Z")
                .unwrap()
                .epoch_quarter(),
            0
        );
        assert_eq!(
            QuarterIndex::parse("1969-12-31T23:45:00Z")
                .unwrap()
                .epoch_quarter(),
            -1
        );
    }

    #[test]
    fn misaligned_timestamps_rejected() {
        for s in [
            "2018-01-08T12:07:00Z",
            "2018-01-08T12:15:30Z",
            "2018-01-08T12:15:00.5Z",
        ] {
            assert!(
                matches!(QuarterIndex::parse(s), Err(Error::Alignment { .. })),
                "{s}"
            );
        }
    }

    #[test]
    fn month_arithmetic() {
        let q = QuarterIndex::parse("2018-03-17T05:45:00Z").unwrap();
        assert_eq!(q.month_start().to_string(), "2018-03-01T00:00:00Z");
        assert_eq!(q.add_months(-3).to_string(), "2017-12-01T00:00:00Z");
        assert_eq!(q.add_months(10).to_string(), "2019-01-01T00:00:00Z");
        assert_eq!(q.minute_of_day(), 345);
    }
}
