//! Lagged feature windows shared by the MLP and GP baselines.
//!
//! A window issued at quarter `t` holds the last 96 prices (oldest first)
//! followed by the last 96 NRV values, both ending at `t`, and the target
//! prices at `t+1 ..= t+T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{PriceMode, QuarterIndex, QuarterSeries};

/// Quarters of history per input channel (24 h).
pub const HISTORY_QUARTERS: usize = 96;
/// Prices then NRV.
pub const N_FEATURES: usize = 2 * HISTORY_QUARTERS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub issue: QuarterIndex,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Feature vector from histories that end at the issue quarter.
pub fn features_from_history(prices: &[f64], nrv: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < HISTORY_QUARTERS || nrv.len() < HISTORY_QUARTERS {
        return Err(Error::InsufficientData(format!(
            "need {HISTORY_QUARTERS} quarters of history, have {}",
            prices.len().min(nrv.len())
        )));
    }
    let mut f = Vec::with_capacity(N_FEATURES);
    f.extend_from_slice(&prices[prices.len() - HISTORY_QUARTERS..]);
    f.extend_from_slice(&nrv[nrv.len() - HISTORY_QUARTERS..]);
    Ok(f)
}

/// Series offsets `i` (issue quarter index) whose window and targets stay
/// inside the series and never touch a forward-filled quarter.
pub fn window_offsets(series: &QuarterSeries, horizon: usize) -> Vec<usize> {
    let len = series.len();
    if horizon == 0 || len < HISTORY_QUARTERS + horizon {
        return Vec::new();
    }
    let mut filled_prefix = Vec::with_capacity(len + 1);
    filled_prefix.push(0usize);
    for f in series.filled() {
        filled_prefix.push(filled_prefix.last().unwrap() + *f as usize);
    }
    (HISTORY_QUARTERS - 1..len - horizon)
        .filter(|&i| filled_prefix[i + horizon + 1] - filled_prefix[i + 1 - HISTORY_QUARTERS] == 0)
        .collect()
}

pub fn window_at(
    series: &QuarterSeries,
    prices: &[f64],
    offset: usize,
    horizon: usize,
) -> FeatureWindow {
    let lo = offset + 1 - HISTORY_QUARTERS;
    let mut features = Vec::with_capacity(N_FEATURES);
    features.extend_from_slice(&prices[lo..=offset]);
    features.extend_from_slice(&series.nrv()[lo..=offset]);
    FeatureWindow {
        issue: series.quarter_at(offset),
        features,
        targets: prices[offset + 1..=offset + horizon].to_vec(),
    }
}

/// Every valid sliding window of the series.
pub fn build_windows(
    series: &QuarterSeries,
    horizon: usize,
    mode: PriceMode,
) -> Result<Vec<FeatureWindow>> {
    let offsets = window_offsets(series, horizon);
    if offsets.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no complete window of {HISTORY_QUARTERS} + {horizon} quarters"
        )));
    }
    let prices = series.target_prices(mode);
    Ok(offsets
        .into_iter()
        .map(|i| window_at(series, &prices, i, horizon))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(len: usize) -> QuarterSeries {
        let prices: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let nrv: Vec<f64> = (0..len).map(|i| -(i as f64)).collect();
        QuarterSeries::new(QuarterIndex::new(1000), nrv, prices.clone(), prices).unwrap()
    }

    #[test]
    fn window_counts() {
        for t in [1usize, 4, 24] {
            assert_eq!(
                build_windows(&ramp(96 + t), t, PriceMode::Positive)
                    .unwrap()
                    .len(),
                1
            );
            assert_eq!(
                build_windows(&ramp(100 + t), t, PriceMode::Positive)
                    .unwrap()
                    .len(),
                5
            );
        }
        assert!(matches!(
            build_windows(&ramp(96), 1, PriceMode::Positive),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn layout_from_ramp() {
        let w = &build_windows(&ramp(100), 4, PriceMode::Positive).unwrap()[0];
        assert_eq!(w.features.len(), N_FEATURES);
        let expect_prices: Vec<f64> = (0..96).map(|i| i as f64).collect();
        let expect_nrv: Vec<f64> = (0..96).map(|i| -(i as f64)).collect();
        assert_eq!(&w.features[..96], expect_prices.as_slice());
        assert_eq!(&w.features[96..], expect_nrv.as_slice());
        assert_eq!(w.targets, vec![96.0, 97.0, 98.0, 99.0]);
        assert_eq!(w.issue, QuarterIndex::new(1000 + 95));
        assert_eq!(
            features_from_history(&ramp(100).pos_price()[..96], &ramp(100).nrv()[..96]).unwrap(),
            w.features
        );
    }

    #[test]
    fn windows_skip_filled_quarters() {
        let s = ramp(110);
        let mut filled = vec![false; 110];
        filled[100] = true;
        let s = QuarterSeries::with_filled(
            s.start(),
            s.nrv().to_vec(),
            s.pos_price().to_vec(),
            s.neg_price().to_vec(),
            filled,
        )
        .unwrap();
        let offs = window_offsets(&s, 1);
        assert_eq!(offs, (95..99).collect::<Vec<_>>());
    }
}
