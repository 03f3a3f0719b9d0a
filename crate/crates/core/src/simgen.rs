//! Seeded synthetic datasets with a known NRV transition law.
//!
//! NRV is a Markov chain over bin centers (optionally jittered inside the
//! bin). The marginal activation price at `t` is the ARC price for the
//! range containing the IGCC-shifted NRV; it serves as both MIP and MDP,
//! and the two imbalance prices follow from settlement.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binning::BinScheme;
use crate::error::{Error, Result};
use crate::market_data::{
    settle_prices, ArcRange, ArcTable, BrpPosition, Dataset, QuarterIndex, QuarterSeries,
    SettlementParams, ARC_RANGES,
};
use crate::tspa::igcc_shift;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Reference ARC prices: downward ranges from -130 up to 20 €/MWh, upward
/// ranges from 60 up to 260 €/MWh.
pub fn reference_arc_prices() -> [f64; ARC_RANGES] {
    let mut p = [0.0; ARC_RANGES];
    for (i, v) in p.iter_mut().enumerate() {
        *v = if i < 11 {
            20.0 - 15.0 * (10 - i) as f64
        } else {
            60.0 + 20.0 * (i - 11) as f64
        };
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArcGenerator {
    /// The same price vector every quarter.
    Constant { prices: [f64; ARC_RANGES] },
    /// Each range follows `x' = base + rho (x - base) + step_std * z`.
    RandomWalk {
        base: [f64; ARC_RANGES],
        rho: f64,
        step_std: f64,
    },
}

impl Default for ArcGenerator {
    fn default() -> Self {
        ArcGenerator::Constant {
            prices: reference_arc_prices(),
        }
    }
}

/// Row-stochastic matrix with `P[i][j] ∝ decay^|i-j|`.
pub fn banded_matrix(n: usize, decay: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let w: Vec<f64> = (0..n)
                .map(|j| decay.powi((i as i32 - j as i32).abs()))
                .collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub matrix: Vec<Vec<f64>>,
    pub scheme: BinScheme,
    pub arc: ArcGenerator,
    pub settlement: SettlementParams,
    pub start: QuarterIndex,
    pub quarters: usize,
    pub seed: u64,
    /// Bin of the first quarter; the middle bin when absent.
    pub initial_state: Option<usize>,
    /// Sample NRV uniformly inside the bin instead of at its center.
    pub jitter: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let scheme = BinScheme::default_scheme();
        SynthSpec {
            matrix: banded_matrix(scheme.n_bins(), 0.35),
            scheme,
            arc: ArcGenerator::default(),
            settlement: SettlementParams::default(),
            start: QuarterIndex::from_date(chrono::NaiveDate::from_ymd_opt(2017, 1, 1).unwrap()),
            quarters: 2 * 365 * 96,
            seed: 0,
            initial_state: None,
            jitter: false,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.scheme.n_bins();
        if self.matrix.len() != n || self.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Spec(format!("transition matrix must be {n}x{n}")));
        }
        for (i, row) in self.matrix.iter().enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Spec(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Spec(format!("row {i} sums to {s}")));
            }
        }
        if self.quarters == 0 {
            return Err(Error::Spec("quarters must be positive".into()));
        }
        if self.initial_state.is_some_and(|s| s >= n) {
            return Err(Error::Spec("initial_state out of range".into()));
        }
        match &self.arc {
            ArcGenerator::Constant { prices } if prices.iter().any(|p| !p.is_finite()) => {
                return Err(Error::Spec("ARC prices must be finite".into()));
            }
            ArcGenerator::RandomWalk {
                base,
                rho,
                step_std,
            } if base.iter().any(|p| !p.is_finite())
                || !(0.0..=1.0).contains(rho)
                || !(*step_std >= 0.0 && step_std.is_finite()) =>
            {
                return Err(Error::Spec("invalid random-walk ARC parameters".into()));
            }
            _ => {}
        }
        self.settlement
            .validate()
            .map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left `u` above the cumulative sum: take the last positive entry.
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

fn sample_in_bin(scheme: &BinScheme, i: usize, rng: &mut ChaCha8Rng) -> f64 {
    let (lo, hi) = scheme.bounds(i);
    let c = scheme.center(i);
    let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (false, true) => (2.0 * c - hi, hi),
        (true, false) => (lo, 2.0 * c - lo),
        (false, false) => (c - 0.5, c + 0.5),
    };
    rng.gen_range(lo..hi)
}

/// Sample a dataset. Deterministic in `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.scheme.n_bins();
    let mut state = spec.initial_state.unwrap_or(n / 2);
    let mut nrv = Vec::with_capacity(spec.quarters);
    for t in 0..spec.quarters {
        if t > 0 {
            state = sample_row(&spec.matrix[state], rng.gen::<f64>());
        }
        nrv.push(if spec.jitter {
            sample_in_bin(&spec.scheme, state, &mut rng)
        } else {
            spec.scheme.center(state)
        });
    }

    let mut arc_rows = Vec::with_capacity(spec.quarters);
    match &spec.arc {
        ArcGenerator::Constant { prices } => arc_rows.resize(spec.quarters, *prices),
        ArcGenerator::RandomWalk {
            base,
            rho,
            step_std,
        } => {
            let mut x = *base;
            for _ in 0..spec.quarters {
                arc_rows.push(x);
                for (v, b) in x.iter_mut().zip(base) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = b + rho * (*v - b) + step_std * z;
                }
            }
        }
    }

    let mut pos = Vec::with_capacity(spec.quarters);
    let mut neg = Vec::with_capacity(spec.quarters);
    for (v, row) in nrv.iter().zip(&arc_rows) {
        let marginal = row[ArcRange::of(igcc_shift(*v)).index()];
        pos.push(settle_prices(
            *v,
            marginal,
            marginal,
            BrpPosition::Long,
            &spec.settlement,
        ));
        neg.push(settle_prices(
            *v,
            marginal,
            marginal,
            BrpPosition::Short,
            &spec.settlement,
        ));
    }

    let series = QuarterSeries::new(spec.start, nrv, pos, neg)?;
    let mut ds = Dataset::new(series, ArcTable::new(spec.start, arc_rows)?)?;
    ds.metadata.insert("generator".into(), "simgen".into());
    ds.metadata.insert("seed".into(), spec.seed.to_string());
    Ok(ds)
}

/// Write the dataset CSVs plus `truth.json` holding the generating spec.
pub fn write_with_truth(spec: &SynthSpec, ds: &Dataset, dir: &Path) -> Result<()> {
    ds.write_dir(dir)?;
    std::fs::write(dir.join(TRUTH_FILE), spec.to_json()? + "\n")?;
    Ok(())
}

pub const TRUTH_FILE: &str = "truth.json";
