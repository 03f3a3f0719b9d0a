//! Rolling-origin schedule: one model vintage per validation month and
//! technique, with an expanding or sliding learning set.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{QuarterIndex, QuarterSpan, QUARTER_MINUTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    Tspa,
    Mlp,
    Gp,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::Tspa, Technique::Mlp, Technique::Gp];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Tspa => "tspa",
            Technique::Mlp => "mlp",
            Technique::Gp => "gp",
        }
    }

    /// Expanding for TSPA and the MLP, previous month only for the GP.
    pub fn default_policy(self) -> LsPolicy {
        match self {
            Technique::Tspa | Technique::Mlp => LsPolicy::Expanding,
            Technique::Gp => LsPolicy::Sliding { months: 1 },
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tspa" => Ok(Technique::Tspa),
            "mlp" => Ok(Technique::Mlp),
            "gp" => Ok(Technique::Gp),
            other => Err(Error::InvalidArgument(format!(
                "unknown technique `{other}` (expected tspa, mlp or gp)"
            ))),
        }
    }
}

/// How the learning set of a vintage is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LsPolicy {
    /// From the schedule origin up to the start of the predicted month.
    Expanding,
    /// The `months` calendar months preceding the predicted month.
    Sliding { months: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingSchedule {
    /// First day of the earliest learning set.
    pub origin: NaiveDate,
    /// First day of the first validation month.
    pub validation_start: NaiveDate,
    pub validation_months: u32,
    /// Forecast horizons in minutes, each a positive multiple of 15.
    pub horizons_min: Vec<u32>,
    /// Per-technique overrides of the learning-set policy.
    pub policies: BTreeMap<Technique, LsPolicy>,
}

impl Default for RollingSchedule {
    fn default() -> Self {
        RollingSchedule {
            origin: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
            validation_start: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            validation_months: 12,
            horizons_min: vec![15, 60, 360],
            policies: BTreeMap::new(),
        }
    }
}

/// Parse comma-separated minutes, e.g. `15,60,360`.
pub fn parse_horizons(s: &str) -> Result<Vec<u32>> {
    let hs = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidArgument(format!("bad horizon `{}`", p.trim())))
        })
        .collect::<Result<Vec<u32>>>()?;
    check_horizons(&hs)?;
    Ok(hs)
}

pub fn check_horizons(hs: &[u32]) -> Result<()> {
    if hs.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one horizon is required".into(),
        ));
    }
    for h in hs {
        if *h == 0 || *h as i64 % QUARTER_MINUTES != 0 {
            return Err(Error::InvalidArgument(format!(
                "horizon {h} min is not a positive multiple of 15"
            )));
        }
    }
    let mut sorted = hs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != hs.len() {
        return Err(Error::InvalidArgument("horizons must be distinct".into()));
    }
    Ok(())
}

impl RollingSchedule {
    pub fn validate(&self) -> Result<()> {
        check_horizons(&self.horizons_min)?;
        if self.validation_months == 0 {
            return Err(Error::InvalidArgument(
                "validation_months must be positive".into(),
            ));
        }
        if self.origin.day() != 1 || self.validation_start.day() != 1 {
            return Err(Error::InvalidArgument(
                "origin and validation_start must be first days of a month".into(),
            ));
        }
        if self.origin >= self.validation_start {
            return Err(Error::InvalidArgument(
                "origin must precede validation_start".into(),
            ));
        }
        for (t, p) in &self.policies {
            if let LsPolicy::Sliding { months: 0 } = p {
                return Err(Error::InvalidArgument(format!(
                    "{t}: sliding window of 0 months"
                )));
            }
        }
        Ok(())
    }

    pub fn policy(&self, t: Technique) -> LsPolicy {
        self.policies
            .get(&t)
            .copied()
            .unwrap_or_else(|| t.default_policy())
    }

    /// Horizons in quarters.
    pub fn horizons(&self) -> Vec<usize> {
        self.horizons_min
            .iter()
            .map(|h| (*h as i64 / QUARTER_MINUTES) as usize)
            .collect()
    }

    pub fn origin_quarter(&self) -> QuarterIndex {
        QuarterIndex::from_date(self.origin)
    }

    pub fn validation_span(&self) -> QuarterSpan {
        let start = QuarterIndex::from_date(self.validation_start);
        QuarterSpan::new(start, start.add_months(self.validation_months as i32))
    }

    fn month_span(&self, m: u32) -> QuarterSpan {
        let v0 = QuarterIndex::from_date(self.validation_start);
        QuarterSpan::new(v0.add_months(m as i32 - 1), v0.add_months(m as i32))
    }
}

/// One trained model: its learning set and the quarters it forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vintage {
    pub technique: Technique,
    /// 1-based validation month.
    pub month: u32,
    pub train: QuarterSpan,
    pub predict: QuarterSpan,
}

/// Vintages per technique (in the given order), then per validation month.
pub fn plan(
    schedule: &RollingSchedule,
    data: QuarterSpan,
    techniques: &[Technique],
) -> Result<Vec<Vintage>> {
    schedule.validate()?;
    let origin = schedule.origin_quarter();
    let needed = QuarterSpan::new(origin, schedule.validation_span().end);
    if !data.covers(&needed) {
        return Err(Error::Coverage(format!(
            "dataset covers {data} but the schedule needs {needed}"
        )));
    }
    let mut out = Vec::new();
    for &technique in techniques {
        for m in 1..=schedule.validation_months {
            let predict = schedule.month_span(m);
            let start = match schedule.policy(technique) {
                LsPolicy::Expanding => origin,
                LsPolicy::Sliding { months } => predict.start.add_months(-(months as i32)),
            };
            if start < origin {
                return Err(Error::Coverage(format!(
                    "{technique} vintage {m} would train from {start}, before the origin {origin}"
                )));
            }
            out.push(Vintage {
                technique,
                month: m,
                train: QuarterSpan::new(start, predict.start),
                predict,
            });
        }
    }
    Ok(out)
}

/// Learning set for a single forecast issued at `t`: everything from the
/// data start (expanding) or the preceding `months` months (sliding), up to
/// the start of `t`'s month.
pub fn train_span_for(
    policy: LsPolicy,
    data_start: QuarterIndex,
    t: QuarterIndex,
) -> Result<QuarterSpan> {
    let end = t.month_start();
    let start = match policy {
        LsPolicy::Expanding => data_start,
        LsPolicy::Sliding { months } => end.add_months(-(months as i32)),
    };
    if start < data_start || start >= end {
        return Err(Error::Coverage(format!(
            "no complete learning set before {t} (data start {data_start})"
        )));
    }
    Ok(QuarterSpan::new(start, end))
}

/// A forecast issued at `t` may only use a vintage whose learning set ends
/// no later than the start of `t`'s month and whose prediction span holds `t`.
pub fn check_no_lookahead(v: &Vintage, t: QuarterIndex) -> Result<()> {
    if v.train.end > t.month_start() || !v.predict.contains(t) || v.train.end > v.predict.start {
        return Err(Error::LookAhead(format!(
            "{} vintage {} trained on {} cannot forecast at {t}",
            v.technique, v.month, v.train
        )));
    }
    Ok(())
}
