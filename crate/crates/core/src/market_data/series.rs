use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::csv_io::{parse_quarter_csv, write_quarter_csv, CsvKind, GapPolicy, QuarterFrame};
use super::settlement::{single_price, PriceMode};
use super::time::{QuarterIndex, QuarterSpan};
use crate::error::{Error, Result};

/// Number of activation ranges in an ARC table.
pub const ARC_RANGES: usize = 22;

/// Gap-free quarter-hourly NRV and imbalance-price history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterSeries {
    start: QuarterIndex,
    nrv_mw: Vec<f64>,
    pos_price: Vec<f64>,
    neg_price: Vec<f64>,
    /// Rows produced by forward-fill; they never enter estimation or scoring.
    filled: Vec<bool>,
}

fn check_finite(name: &str, start: QuarterIndex, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Value(format!(
            "non-finite {name} at {}",
            start + i as i64
        ))),
        None => Ok(()),
    }
}

impl QuarterSeries {
    pub fn new(
        start: QuarterIndex,
        nrv_mw: Vec<f64>,
        pos_price: Vec<f64>,
        neg_price: Vec<f64>,
    ) -> Result<Self> {
        let n = nrv_mw.len();
        Self::with_filled(start, nrv_mw, pos_price, neg_price, vec![false; n])
    }

    pub fn with_filled(
        start: QuarterIndex,
        nrv_mw: Vec<f64>,
        pos_price: Vec<f64>,
        neg_price: Vec<f64>,
        filled: Vec<bool>,
    ) -> Result<Self> {
        let n = nrv_mw.len();
        if pos_price.len() != n || neg_price.len() != n || filled.len() != n {
            return Err(Error::Schema(format!(
                "column lengths differ: nrv {n}, pos {}, neg {}, filled {}",
                pos_price.len(),
                neg_price.len(),
                filled.len()
            )));
        }
        check_finite("nrv", start, &nrv_mw)?;
        check_finite("positive price", start, &pos_price)?;
        check_finite("negative price", start, &neg_price)?;
        Ok(QuarterSeries {
            start,
            nrv_mw,
            pos_price,
            neg_price,
            filled,
        })
    }

    /// Combine an NRV frame and a price frame covering the same quarters.
    pub fn from_frames(nrv: &QuarterFrame, prices: &QuarterFrame) -> Result<Self> {
        if nrv.kind != CsvKind::Nrv || prices.kind != CsvKind::Prices {
            return Err(Error::Schema(
                "expected an NRV frame and a price frame".into(),
            ));
        }
        if nrv.span() != prices.span() {
            return Err(Error::Coverage(format!(
                "NRV covers {} but prices cover {}",
                nrv.span(),
                prices.span()
            )));
        }
        let filled = nrv
            .filled
            .iter()
            .zip(&prices.filled)
            .map(|(a, b)| *a || *b)
            .collect();
        Self::with_filled(
            nrv.start,
            nrv.columns[0].clone(),
            prices.columns[0].clone(),
            prices.columns[1].clone(),
            filled,
        )
    }

    pub fn start(&self) -> QuarterIndex {
        self.start
    }

    /// One past the last quarter.
    pub fn end(&self) -> QuarterIndex {
        self.start + self.len() as i64
    }

    pub fn span(&self) -> QuarterSpan {
        QuarterSpan::new(self.start, self.end())
    }

    pub fn len(&self) -> usize {
        self.nrv_mw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nrv_mw.is_empty()
    }

    pub fn nrv(&self) -> &[f64] {
        &self.nrv_mw
    }

    pub fn pos_price(&self) -> &[f64] {
        &self.pos_price
    }

    pub fn neg_price(&self) -> &[f64] {
        &self.neg_price
    }

    pub fn filled(&self) -> &[bool] {
        &self.filled
    }

    pub fn filled_count(&self) -> usize {
        self.filled.iter().filter(|f| **f).count()
    }

    pub fn index_of(&self, q: QuarterIndex) -> Option<usize> {
        let off = q - self.start;
        (off >= 0 && (off as usize) < self.len()).then_some(off as usize)
    }

    pub fn quarter_at(&self, i: usize) -> QuarterIndex {
        self.start + i as i64
    }

    /// The single price series used as forecasting target.
    pub fn target_prices(&self, mode: PriceMode) -> Vec<f64> {
        self.pos_price
            .iter()
            .zip(&self.neg_price)
            .map(|(p, n)| single_price(*p, *n, mode))
            .collect()
    }

    /// Sub-series restricted to `span`, which must lie inside the series.
    pub fn slice(&self, span: QuarterSpan) -> Result<QuarterSeries> {
        if !self.span().covers(&span) {
            return Err(Error::Range {
                quarter: span.to_string(),
                span: self.span().to_string(),
            });
        }
        let a = (span.start - self.start) as usize;
        let b = (span.end - self.start) as usize;
        Ok(QuarterSeries {
            start: span.start,
            nrv_mw: self.nrv_mw[a..b].to_vec(),
            pos_price: self.pos_price[a..b].to_vec(),
            neg_price: self.neg_price[a..b].to_vec(),
            filled: self.filled[a..b].to_vec(),
        })
    }

    /// Same values relabelled `delta` quarters later.
    pub fn shifted(&self, delta: i64) -> QuarterSeries {
        QuarterSeries {
            start: self.start + delta,
            ..self.clone()
        }
    }

    pub fn nrv_frame(&self) -> QuarterFrame {
        QuarterFrame {
            kind: CsvKind::Nrv,
            start: self.start,
            columns: vec![self.nrv_mw.clone()],
            filled: self.filled.clone(),
        }
    }

    pub fn price_frame(&self) -> QuarterFrame {
        QuarterFrame {
            kind: CsvKind::Prices,
            start: self.start,
            columns: vec![self.pos_price.clone(), self.neg_price.clone()],
            filled: self.filled.clone(),
        }
    }
}

/// 1-based activation range `p` of an ARC table, 1..=22.
///
/// Ranges 1..=11 are downward and half-open on the left: `(-inf,-1000]`,
/// `(-1000,-900]`, ..., `(-200,-100]`, `(-100,0)`. Ranges 12..=22 are
/// upward and half-open on the right: `[0,100)`, ..., `[900,1000)`,
/// `[1000,+inf)`. Together they partition the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArcRange(u8);

impl ArcRange {
    pub fn of(mw: f64) -> ArcRange {
        // Count the boundaries that `mw` has passed. Downward boundaries are
        // passed strictly, upward ones inclusively.
        let mut passed = 0u8;
        for b in 1..=10 {
            if mw > -100.0 * b as f64 {
                passed += 1;
            }
        }
        for b in 0..=10 {
            if mw >= 100.0 * b as f64 {
                passed += 1;
            }
        }
        ArcRange(passed + 1)
    }

    pub fn from_number(p: usize) -> Option<ArcRange> {
        (1..=ARC_RANGES).contains(&p).then_some(ArcRange(p as u8))
    }

    pub fn number(self) -> usize {
        self.0 as usize
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn is_upward(self) -> bool {
        self.0 >= 12
    }

    /// Interval bounds in MW; infinite at the tails.
    pub fn bounds(self) -> (f64, f64) {
        let p = self.0 as i32;
        let lo = match p {
            1 => f64::NEG_INFINITY,
            p if p <= 11 => -100.0 * (12 - p) as f64,
            p => 100.0 * (p - 12) as f64,
        };
        let hi = match p {
            11 => 0.0,
            22 => f64::INFINITY,
            p if p < 11 => -100.0 * (11 - p) as f64,
            p => 100.0 * (p - 11) as f64,
        };
        (lo, hi)
    }
}

/// Per-quarter marginal activation prices for the 22 activation ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcTable {
    start: QuarterIndex,
    prices: Vec<[f64; ARC_RANGES]>,
}

impl ArcTable {
    pub fn new(start: QuarterIndex, prices: Vec<[f64; ARC_RANGES]>) -> Result<Self> {
        for (i, row) in prices.iter().enumerate() {
            check_finite("ARC price", start + i as i64, row)?;
        }
        Ok(ArcTable { start, prices })
    }

    pub fn from_frame(frame: &QuarterFrame) -> Result<Self> {
        if frame.kind != CsvKind::Arc {
            return Err(Error::Schema("expected an ARC frame".into()));
        }
        let rows = (0..frame.len())
            .map(|i| std::array::from_fn(|p| frame.columns[p][i]))
            .collect();
        Self::new(frame.start, rows)
    }

    pub fn to_frame(&self) -> QuarterFrame {
        QuarterFrame {
            kind: CsvKind::Arc,
            start: self.start,
            columns: (0..ARC_RANGES)
                .map(|p| self.prices.iter().map(|r| r[p]).collect())
                .collect(),
            filled: vec![false; self.prices.len()],
        }
    }

    pub fn start(&self) -> QuarterIndex {
        self.start
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn span(&self) -> QuarterSpan {
        QuarterSpan::new(self.start, self.start + self.len() as i64)
    }

    pub fn row(&self, t: QuarterIndex) -> Result<&[f64; ARC_RANGES]> {
        let off = t - self.start;
        if off < 0 || off as usize >= self.prices.len() {
            return Err(Error::Range {
                quarter: t.to_string(),
                span: self.span().to_string(),
            });
        }
        Ok(&self.prices[off as usize])
    }

    /// Price at quarter `t` of the range containing `mw`.
    pub fn price_at(&self, t: QuarterIndex, mw: f64) -> Result<f64> {
        Ok(self.row(t)?[ArcRange::of(mw).index()])
    }

    pub fn rows(&self) -> &[[f64; ARC_RANGES]] {
        &self.prices
    }
}

/// Everything a forecaster needs: history plus the ARC table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub series: QuarterSeries,
    pub arc: ArcTable,
    pub metadata: BTreeMap<String, String>,
}

pub const NRV_FILE: &str = "nrv.csv";
pub const PRICES_FILE: &str = "prices.csv";
pub const ARC_FILE: &str = "arc.csv";

impl Dataset {
    pub fn new(series: QuarterSeries, arc: ArcTable) -> Result<Self> {
        if series.span() != arc.span() {
            return Err(Error::Coverage(format!(
                "series covers {} but ARC table covers {}",
                series.span(),
                arc.span()
            )));
        }
        Ok(Dataset {
            series,
            arc,
            metadata: BTreeMap::new(),
        })
    }

    pub fn span(&self) -> QuarterSpan {
        self.series.span()
    }

    /// Load `nrv.csv`, `prices.csv` and `arc.csv` from a directory.
    pub fn load_dir(dir: &Path, gaps: GapPolicy) -> Result<Self> {
        let read = |name: &str, kind| -> Result<QuarterFrame> {
            let path = dir.join(name);
            let bytes = std::fs::read(&path).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            parse_quarter_csv(&bytes, kind, gaps)
        };
        let nrv = read(NRV_FILE, CsvKind::Nrv)?;
        let prices = read(PRICES_FILE, CsvKind::Prices)?;
        let arc = read(ARC_FILE, CsvKind::Arc)?;
        let mut ds = Dataset::new(
            QuarterSeries::from_frames(&nrv, &prices)?,
            ArcTable::from_frame(&arc)?,
        )?;
        ds.metadata
            .insert("source".into(), dir.display().to_string());
        Ok(ds)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(NRV_FILE),
            write_quarter_csv(&self.series.nrv_frame()),
        )?;
        std::fs::write(
            dir.join(PRICES_FILE),
            write_quarter_csv(&self.series.price_frame()),
        )?;
        std::fs::write(dir.join(ARC_FILE), write_quarter_csv(&self.arc.to_frame()))?;
        Ok(())
    }
}
