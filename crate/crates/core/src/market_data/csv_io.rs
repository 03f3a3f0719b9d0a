//! Quarter-hourly CSV ingestion and serialization.
//!
//! Three layouts are supported, all keyed by an ISO-8601 UTC timestamp on
//! the 15-minute grid:
//!
//! - NRV: `timestamp_utc,nrv_mw`
//! - prices: `timestamp_utc,pos_price_eur_mwh,neg_price_eur_mwh`
//! - ARC: `timestamp_utc,p01,...,p22` (`p01` is the most negative range)
//!
//! Writing uses `YYYY-MM-DDTHH:MM:SSZ` timestamps, shortest round-trip
//! decimal floats and LF line endings, so a file written here parses and
//! re-serializes to identical bytes.

use std::fmt::Write as _;

use super::series::ARC_RANGES;
use super::time::{QuarterIndex, QuarterSpan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Nrv,
    Prices,
    Arc,
}

impl CsvKind {
    pub fn header(self) -> Vec<String> {
        let mut h = vec!["timestamp_utc".to_string()];
        match self {
            CsvKind::Nrv => h.push("nrv_mw".into()),
            CsvKind::Prices => {
                h.push("pos_price_eur_mwh".into());
                h.push("neg_price_eur_mwh".into());
            }
            CsvKind::Arc => h.extend((1..=ARC_RANGES).map(|p| format!("p{p:02}"))),
        }
        h
    }

    pub fn value_columns(self) -> usize {
        match self {
            CsvKind::Nrv => 1,
            CsvKind::Prices => 2,
            CsvKind::Arc => ARC_RANGES,
        }
    }
}

/// What to do when a quarter is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapPolicy {
    #[default]
    Error,
    /// Repeat the previous row and flag the inserted quarter as filled.
    ForwardFill,
}

/// Validated, contiguous, time-sorted columns from one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterFrame {
    pub kind: CsvKind,
    pub start: QuarterIndex,
    pub columns: Vec<Vec<f64>>,
    pub filled: Vec<bool>,
}

impl QuarterFrame {
    pub fn len(&self) -> usize {
        self.filled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filled.is_empty()
    }

    pub fn span(&self) -> QuarterSpan {
        QuarterSpan::new(self.start, self.start + self.len() as i64)
    }
}

pub fn parse_quarter_csv(bytes: &[u8], kind: CsvKind, gaps: GapPolicy) -> Result<QuarterFrame> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let expected = kind.header();
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(Error::Schema(format!(
            "expected header `{}`, found `{}` ({} columns)",
            expected.join(","),
            header.join(","),
            header.len()
        )));
    }

    let width = kind.value_columns();
    let mut rows: Vec<(QuarterIndex, Vec<f64>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let line = line + 2;
        if record.len() != width + 1 {
            return Err(Error::Schema(format!(
                "line {line}: expected {} fields, found {}",
                width + 1,
                record.len()
            )));
        }
        let t = QuarterIndex::parse(&record[0])?;
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Value(format!("line {line}: `{f}` is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Value(format!("line {line}: non-finite value `{f}`")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((t, values));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("CSV contains no data rows".into()));
    }

    rows.sort_by_key(|(t, _)| *t);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateTimestamp {
            timestamp: w[0].0.to_string(),
        });
    }

    let start = rows[0].0;
    let mut columns = vec![Vec::with_capacity(rows.len()); width];
    let mut filled = Vec::with_capacity(rows.len());
    let mut expected_t = start;
    for (t, values) in rows {
        while expected_t < t {
            if gaps == GapPolicy::Error {
                return Err(Error::Gap {
                    missing: expected_t.to_string(),
                });
            }
            for col in columns.iter_mut() {
                let last = *col.last().expect("first row is never a gap");
                col.push(last);
            }
            filled.push(true);
            expected_t = expected_t + 1;
        }
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
        filled.push(false);
        expected_t = t + 1;
    }

    Ok(QuarterFrame {
        kind,
        start,
        columns,
        filled,
    })
}

pub fn write_quarter_csv(frame: &QuarterFrame) -> Vec<u8> {
    let mut out = String::with_capacity(frame.len() * (24 + 12 * frame.columns.len()));
    out.push_str(&frame.kind.header().join(","));
    out.push('\n');
    for i in 0..frame.len() {
        write!(out, "{}", frame.start + i as i64).unwrap();
        for col in &frame.columns {
            write!(out, ",{}", col[i]).unwrap();
        }
        out.push('\n');
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NRV4: &str = "timestamp_utc,nrv_mw\n\
        2018-01-01T00:00:00Z,12.5\n\
        2018-01-01T00:15:00Z,-40\n\
        2018-01-01T00:30:00Z,0\n\
        2018-01-01T00:45:00Z,101.25\n";

    #[test]
    fn four_contiguous_rows() {
        let f = parse_quarter_csv(NRV4.as_bytes(), CsvKind::Nrv, GapPolicy::Error).unwrap();
        assert_eq!(f.len(), 4);
        assert_eq!(f.columns[0], vec![12.5, -40.0, 0.0, 101.25]);
        assert_eq!(write_quarter_csv(&f), NRV4.as_bytes());
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let src = "timestamp_utc,nrv_mw\n2018-01-01T00:15:00Z,2\n2018-01-01T00:00:00Z,1\n";
        let f = parse_quarter_csv(src.as_bytes(), CsvKind::Nrv, GapPolicy::Error).unwrap();
        assert_eq!(f.columns[0], vec![1.0, 2.0]);
    }

    #[test]
    fn gap_names_missing_quarter() {
        let src = "timestamp_utc,nrv_mw\n2018-01-01T00:00:00Z,1\n2018-01-01T00:30:00Z,3\n";
        match parse_quarter_csv(src.as_bytes(), CsvKind::Nrv, GapPolicy::Error) {
            Err(Error::Gap { missing }) => assert_eq!(missing, "2018-01-01T00:15:00Z"),
            other => panic!("expected gap error, got {other:?}"),
        }
        let f = parse_quarter_csv(src.as_bytes(), CsvKind::Nrv, GapPolicy::ForwardFill).unwrap();
        assert_eq!(f.columns[0], vec![1.0, 1.0, 3.0]);
        assert_eq!(f.filled, vec![false, true, false]);
    }

    #[test]
    fn misaligned_timestamp() {
        let src = "timestamp_utc,nrv_mw\n2018-01-01T00:10:00Z,1\n";
        assert!(matches!(
            parse_quarter_csv(src.as_bytes(), CsvKind::Nrv, GapPolicy::Error),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn arc_with_21_columns_is_schema_error() {
        let header: Vec<String> = std::iter::once("timestamp_utc".to_string())
            .chain((1..=21).map(|p| format!("p{p:02}")))
            .collect();
        let row: Vec<String> = std::iter::once("2018-01-01T00:00:00Z".to_string())
            .chain((1..=21).map(|p| p.to_string()))
            .collect();
        let src = format!("{}\n{}\n", header.join(","), row.join(","));
        assert!(matches!(
            parse_quarter_csv(src.as_bytes(), CsvKind::Arc, GapPolicy::Error),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn short_row_is_schema_error() {
        let src = "timestamp_utc,pos_price_eur_mwh,neg_price_eur_mwh\n2018-01-01T00:00:00Z,1\n";
        assert!(matches!(
            parse_quarter_csv(src.as_bytes(), CsvKind::Prices, GapPolicy::Error),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn non_finite_and_garbage_values() {
        for bad in ["NaN", "inf", "-inf", "abc", ""] {
            let src = format!("timestamp_utc,nrv_mw\n2018-01-01T00:00:00Z,{bad}\n");
            assert!(
                matches!(
                    parse_quarter_csv(src.as_bytes(), CsvKind::Nrv, GapPolicy::Error),
                    Err(Error::Value(_))
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn duplicates_rejected() {
        let src = "timestamp_utc,nrv_mw\n2018-01-01T00:00:00Z,1\n2018-01-01T00:00:00Z,2\n";
        assert!(matches!(
            parse_quarter_csv(src.as_bytes(), CsvKind::Nrv, GapPolicy::Error),
            Err(Error::DuplicateTimestamp { .. })
        ));
    }

    fn frame_strategy() -> impl Strategy<Value = QuarterFrame> {
        (0usize..3, -2_000_000i64..2_000_000, 1usize..40).prop_flat_map(|(k, start, n)| {
            let kind = [CsvKind::Nrv, CsvKind::Prices, CsvKind::Arc][k];
            proptest::collection::vec(
                proptest::collection::vec(-1e5f64..1e5, n),
                kind.value_columns(),
            )
            .prop_map(move |columns| QuarterFrame {
                kind,
                start: QuarterIndex::new(start),
                columns,
                filled: vec![false; n],
            })
        })
    }

    proptest! {
        #[test]
        fn serialized_csv_round_trips_byte_for_byte(frame in frame_strategy()) {
            let bytes = write_quarter_csv(&frame);
            let parsed = parse_quarter_csv(&bytes, frame.kind, GapPolicy::Error).unwrap();
            prop_assert_eq!(&parsed, &frame);
            prop_assert_eq!(write_quarter_csv(&parsed), bytes);
        }
    }
}
