//! Two-step price inference: the NRV transition row at lead time `k` is
//! pushed through the IGCC shift and the ARC table at `t + k`, giving a
//! discrete imbalance-price distribution.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market_data::{ArcTable, QuarterIndex};
use crate::transition::TransitionMatrixSet;

/// Volume assumed to be covered by IGCC netting before the ARC table is hit.
pub const IGCC_BAND_MW: f64 = 100.0;

/// Map NRV to the volume left for contracted reserves:
/// identity on `[-100, 100]`, shifted 100 MW toward zero outside it.
pub fn igcc_shift(x: f64) -> f64 {
    if x.abs() <= IGCC_BAND_MW {
        x
    } else if x > IGCC_BAND_MW {
        x - IGCC_BAND_MW
    } else {
        x + IGCC_BAND_MW
    }
}

/// ARC price at quarter `t` for the activation range containing `shifted_mw`.
pub fn arc_price(arc: &ArcTable, t: QuarterIndex, shifted_mw: f64) -> Result<f64> {
    arc.price_at(t, shifted_mw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub price: f64,
    pub prob: f64,
}

/// Finite-support price distribution. Atoms are sorted by price, carry
/// strictly positive mass and have distinct prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePriceDistribution {
    pub atoms: Vec<Atom>,
    pub mean: f64,
    pub std: f64,
}

impl DiscretePriceDistribution {
    /// Sort, merge identical prices and drop zero-mass atoms. Moments come
    /// from the merged atoms.
    pub fn from_atoms(atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.prob > 0.0).collect();
        atoms.sort_by(|a, b| a.price.total_cmp(&b.price));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.price == a.price => last.prob += a.prob,
                _ => merged.push(a),
            }
        }
        let mean = merged.iter().map(|a| a.prob * a.price).sum();
        let var: f64 = merged
            .iter()
            .map(|a| a.prob * (a.price - mean) * (a.price - mean))
            .sum();
        DiscretePriceDistribution {
            atoms: merged,
            mean,
            std: var.max(0.0).sqrt(),
        }
    }

    pub fn point(price: f64) -> Self {
        Self::from_atoms([Atom { price, prob: 1.0 }])
    }

    pub fn total_prob(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    /// `[[price,prob],...]`
    pub fn atoms_json(&self) -> String {
        let pairs: Vec<[f64; 2]> = self.atoms.iter().map(|a| [a.price, a.prob]).collect();
        serde_json::to_string(&pairs).expect("finite floats serialize")
    }
}

/// Forecaster pairing estimated transition matrices with an ARC table.
#[derive(Debug, Clone, Copy)]
pub struct TspaModel<'a> {
    pub tm: &'a TransitionMatrixSet,
    pub arc: &'a ArcTable,
}

impl<'a> TspaModel<'a> {
    pub fn new(tm: &'a TransitionMatrixSet, arc: &'a ArcTable) -> Self {
        TspaModel { tm, arc }
    }

    /// Price distribution for quarter `t + k`, issued at `t` with NRV `current_nrv`.
    pub fn forecast(
        &self,
        t: QuarterIndex,
        current_nrv: f64,
        k: usize,
    ) -> Result<DiscretePriceDistribution> {
        let row = self.tm.row_for(k, current_nrv)?;
        let target = t + k as i64;
        let prices = self.arc.row(target)?;
        let centers = self.tm.scheme.centers();
        let atoms: Vec<Atom> = row
            .iter()
            .zip(centers)
            .map(|(p, c)| Atom {
                price: prices[crate::market_data::ArcRange::of(igcc_shift(*c)).index()],
                prob: *p,
            })
            .collect();
        // Moments straight from the per-bin sum, before merging.
        let mean: f64 = atoms.iter().map(|a| a.prob * a.price).sum();
        let var: f64 = atoms
            .iter()
            .map(|a| a.prob * (a.price - mean) * (a.price - mean))
            .sum();
        let mut dist = DiscretePriceDistribution::from_atoms(atoms);
        dist.mean = mean;
        dist.std = var.max(0.0).sqrt();
        Ok(dist)
    }

    /// One distribution per estimated lead time, in lead-time order.
    pub fn forecast_horizon(
        &self,
        t: QuarterIndex,
        current_nrv: f64,
    ) -> Result<Vec<(usize, DiscretePriceDistribution)>> {
        self.tm
            .lead_times()
            .into_iter()
            .map(|k| Ok((k, self.forecast(t, current_nrv, k)?)))
            .collect()
    }
}

/// `issue_time,lead_min,mean,std,atoms_json` rows for one issue time.
pub fn forecast_csv(
    issue: QuarterIndex,
    forecasts: &[(usize, DiscretePriceDistribution)],
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["issue_time", "lead_min", "mean", "std", "atoms_json"])?;
    for (k, d) in forecasts {
        w.write_record([
            issue.to_string(),
            (k * 15).to_string(),
            d.mean.to_string(),
            d.std.to_string(),
            d.atoms_json(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}
