//! Imbalance settlement: from NRV and the marginal upward/downward
//! regulation prices to the positive and negative imbalance prices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of a balance responsible party's perimeter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrpPosition {
    /// Perimeter > 0; settled at the positive imbalance price.
    Long,
    /// Perimeter < 0; settled at the negative imbalance price.
    Short,
}

/// Correction-term policy. The correction is
/// `alpha_slope * max(0, |nrv| - alpha_threshold_mw)`; the system imbalance
/// is proxied by `|nrv|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SettlementParams {
    pub alpha_threshold_mw: f64,
    pub alpha_slope: f64,
}

impl Default for SettlementParams {
    fn default() -> Self {
        SettlementParams {
            alpha_threshold_mw: 140.0,
            alpha_slope: 0.0,
        }
    }
}

impl SettlementParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_threshold_mw >= 0.0 && self.alpha_threshold_mw.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha_threshold_mw must be finite and >= 0, got {}",
                self.alpha_threshold_mw
            )));
        }
        if !(self.alpha_slope >= 0.0 && self.alpha_slope.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha_slope must be finite and >= 0, got {}",
                self.alpha_slope
            )));
        }
        Ok(())
    }

    pub fn alpha(&self, nrv: f64) -> f64 {
        self.alpha_slope * (nrv.abs() - self.alpha_threshold_mw).max(0.0)
    }
}

/// Imbalance price paid or received by a BRP.
///
/// | perimeter | NRV < 0       | NRV >= 0      |
/// |-----------|---------------|---------------|
/// | long      | MDP - alpha   | MIP           |
/// | short     | MDP           | MIP + alpha   |
///
/// NRV exactly zero takes the MIP column.
pub fn settle_prices(
    nrv: f64,
    mip: f64,
    mdp: f64,
    position: BrpPosition,
    params: &SettlementParams,
) -> f64 {
    let alpha = params.alpha(nrv);
    match (nrv < 0.0, position) {
        (true, BrpPosition::Long) => mdp - alpha,
        (true, BrpPosition::Short) => mdp,
        (false, BrpPosition::Long) => mip,
        (false, BrpPosition::Short) => mip + alpha,
    }
}

/// How positive and negative prices collapse into one target value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceMode {
    #[default]
    Positive,
    Mean,
}

pub fn single_price(pos: f64, neg: f64, mode: PriceMode) -> f64 {
    match mode {
        PriceMode::Positive => pos,
        PriceMode::Mean => 0.5 * (pos + neg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_examples() {
        let d = SettlementParams::default();
        assert_eq!(
            settle_prices(-100.0, f64::NAN, 10.0, BrpPosition::Long, &d),
            10.0
        );
        assert_eq!(
            settle_prices(150.0, 80.0, f64::NAN, BrpPosition::Short, &d),
            80.0
        );
        let sloped = SettlementParams {
            alpha_slope: 0.1,
            ..d
        };
        let p = settle_prices(200.0, 80.0, 0.0, BrpPosition::Short, &sloped);
        assert!((p - 86.0).abs() < 1e-12);
        let p = settle_prices(-200.0, 0.0, 30.0, BrpPosition::Long, &sloped);
        assert!((p - 24.0).abs() < 1e-12);
        // The other diagonal never carries a correction.
        assert_eq!(
            settle_prices(200.0, 80.0, 0.0, BrpPosition::Long, &sloped),
            80.0
        );
        assert_eq!(
            settle_prices(-200.0, 0.0, 30.0, BrpPosition::Short, &sloped),
            30.0
        );
    }

    #[test]
    fn zero_nrv_takes_mip() {
        let d = SettlementParams::default();
        assert_eq!(settle_prices(0.0, 70.0, 20.0, BrpPosition::Long, &d), 70.0);
        assert_eq!(settle_prices(0.0, 70.0, 20.0, BrpPosition::Short, &d), 70.0);
    }

    #[test]
    fn single_price_modes() {
        assert_eq!(single_price(42.0, 42.0, PriceMode::Positive), 42.0);
        assert_eq!(single_price(40.0, 44.0, PriceMode::Positive), 40.0);
        assert_eq!(single_price(40.0, 44.0, PriceMode::Mean), 42.0);
    }

    #[test]
    fn params_validation() {
        assert!(SettlementParams::default().validate().is_ok());
        assert!(SettlementParams {
            alpha_slope: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SettlementParams {
            alpha_threshold_mw: f64::NAN,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn below_threshold_is_exact_marginal_price(
            nrv in -139.9f64..139.9, mip in -500.0f64..500.0, mdp in -500.0f64..500.0,
            slope in 0.0f64..5.0, long in any::<bool>(),
        ) {
            let params = SettlementParams { alpha_slope: slope, ..Default::default() };
            let pos = if long { BrpPosition::Long } else { BrpPosition::Short };
            let p = settle_prices(nrv, mip, mdp, pos, &params);
            prop_assert_eq!(p, if nrv < 0.0 { mdp } else { mip });
        }

        #[test]
        fn monotone_in_marginal_price(
            nrv in -2000.0f64..2000.0, a in -500.0f64..500.0, b in -500.0f64..500.0,
            slope in 0.0f64..5.0, long in any::<bool>(),
        ) {
            let params = SettlementParams { alpha_slope: slope, ..Default::default() };
            let pos = if long { BrpPosition::Long } else { BrpPosition::Short };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(settle_prices(nrv, lo, lo, pos, &params) <= settle_prices(nrv, hi, hi, pos, &params));
        }
    }
}
