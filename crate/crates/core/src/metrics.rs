//! Point and probabilistic scores: NMAE, NRMSE, pinball loss and CRPS.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::tspa::DiscretePriceDistribution;

/// Mean absolute 2018 Belgian imbalance price, €/MWh.
pub const REFERENCE_NORMALIZER: f64 = 55.02;

/// Quantile levels 0.01, 0.02, ..., 0.99.
pub fn quantile_grid() -> impl Iterator<Item = f64> {
    (1..=99).map(|i| i as f64 / 100.0)
}

/// A predictive distribution for one delivery quarter.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictive {
    Point(f64),
    Gaussian { mean: f64, std: f64 },
    Discrete(DiscretePriceDistribution),
}

impl Predictive {
    pub fn mean(&self) -> f64 {
        match self {
            Predictive::Point(x) => *x,
            Predictive::Gaussian { mean, .. } => *mean,
            Predictive::Discrete(d) => d.mean,
        }
    }

    pub fn std(&self) -> f64 {
        match self {
            Predictive::Point(_) => 0.0,
            Predictive::Gaussian { std, .. } => *std,
            Predictive::Discrete(d) => d.std,
        }
    }

    pub fn is_probabilistic(&self) -> bool {
        !matches!(self, Predictive::Point(_))
    }

    /// Quantile function; the generalized inverse for discrete atoms.
    pub fn quantile(&self, q: f64) -> f64 {
        match self {
            Predictive::Point(x) => *x,
            Predictive::Gaussian { mean, std } if *std > 0.0 => {
                mean + std * standard_normal().inverse_cdf(q)
            }
            Predictive::Gaussian { mean, .. } => *mean,
            Predictive::Discrete(d) => discrete_quantile(d, q),
        }
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Cumulative sums are compared with this slack so that e.g. 0.1 + 0.2
/// still reaches the 0.3 quantile.
const CDF_SLACK: f64 = 1e-12;

/// `inf { x : F(x) >= q }`.
pub fn discrete_quantile(d: &DiscretePriceDistribution, q: f64) -> f64 {
    let mut cum = 0.0;
    for a in &d.atoms {
        cum += a.prob;
        if cum >= q - CDF_SLACK {
            return a.price;
        }
    }
    d.atoms.last().map(|a| a.price).unwrap_or(f64::NAN)
}

/// Normalized MAE and RMSE in percent of `normalizer`.
pub fn nmae_nrmse(pred_means: &[f64], actuals: &[f64], normalizer: f64) -> Result<(f64, f64)> {
    if pred_means.is_empty() {
        return Err(Error::EmptyInput);
    }
    if pred_means.len() != actuals.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} actuals",
            pred_means.len(),
            actuals.len()
        )));
    }
    if !(normalizer > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "normalizer must be > 0, got {normalizer}"
        )));
    }
    let n = pred_means.len() as f64;
    let (abs, sq) = pred_means
        .iter()
        .zip(actuals)
        .fold((0.0, 0.0), |(a, s), (p, y)| {
            let e = y - p;
            (a + e.abs(), s + e * e)
        });
    Ok((
        100.0 * abs / n / normalizer,
        100.0 * (sq / n).sqrt() / normalizer,
    ))
}

/// Mean absolute actual price, the default NMAE/NRMSE normalizer.
pub fn mean_abs(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64)
}

/// Quantile (pinball) loss of a single quantile forecast.
pub fn pinball(q: f64, pred_q: f64, actual: f64) -> f64 {
    if actual >= pred_q {
        q * (actual - pred_q)
    } else {
        (1.0 - q) * (pred_q - actual)
    }
}

fn unit_normal_quantiles() -> &'static [f64; 99] {
    static Z: OnceLock<[f64; 99]> = OnceLock::new();
    Z.get_or_init(|| {
        let n = standard_normal();
        let mut z = [0.0; 99];
        for (v, q) in z.iter_mut().zip(quantile_grid()) {
            *v = n.inverse_cdf(q);
        }
        z
    })
}

/// Pinball loss averaged over the 99-level quantile grid.
pub fn plf_score(dist: &Predictive, actual: f64) -> f64 {
    let total: f64 = match dist {
        Predictive::Gaussian { mean, std } if *std > 0.0 => unit_normal_quantiles()
            .iter()
            .zip(quantile_grid())
            .map(|(z, q)| pinball(q, mean + std * z, actual))
            .sum(),
        Predictive::Discrete(d) if !d.atoms.is_empty() => {
            // Grid and atoms are both ascending: one merged pass.
            let mut atoms = d.atoms.iter();
            let mut current = atoms.next().unwrap();
            let mut cum = current.prob;
            let mut sum = 0.0;
            for q in quantile_grid() {
                while cum < q - CDF_SLACK {
                    match atoms.next() {
                        Some(a) => {
                            current = a;
                            cum += a.prob;
                        }
                        None => break,
                    }
                }
                sum += pinball(q, current.price, actual);
            }
            sum
        }
        _ => quantile_grid()
            .map(|q| pinball(q, dist.quantile(q), actual))
            .sum(),
    };
    total / 99.0
}

/// Closed-form CRPS of `N(mean, std^2)`.
pub fn crps_gaussian(mean: f64, std: f64, actual: f64) -> f64 {
    if std <= 0.0 {
        return (actual - mean).abs();
    }
    let z = (actual - mean) / std;
    let cdf = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    std * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::f64::consts::PI.sqrt())
}

/// Exact `∫ (F(x) - 1[x >= y])^2 dx` for a step CDF.
pub fn crps_discrete(d: &DiscretePriceDistribution, actual: f64) -> f64 {
    if d.atoms.is_empty() {
        return f64::NAN;
    }
    // Walk the sorted breakpoints (atoms plus the observation); between
    // consecutive breakpoints both F and the indicator are constant.
    let mut total = 0.0;
    let mut cdf = 0.0;
    let mut prev = f64::NEG_INFINITY;
    let mut passed_actual = false;
    let mut atoms = d.atoms.iter().peekable();
    loop {
        let next_atom = atoms.peek().map(|a| a.price);
        let (x, is_atom) = match next_atom {
            Some(p) if passed_actual || p < actual => (p, true),
            _ if !passed_actual => (actual, false),
            _ => break,
        };
        if prev.is_finite() {
            let h = if passed_actual { 1.0 } else { 0.0 };
            total += (cdf - h) * (cdf - h) * (x - prev);
        }
        if is_atom {
            cdf += atoms.next().unwrap().prob;
        } else {
            passed_actual = true;
        }
        prev = x;
    }
    // Past the last breakpoint F = 1 = indicator, no further contribution.
    total
}

pub fn crps(dist: &Predictive, actual: f64) -> f64 {
    match dist {
        Predictive::Point(x) => (actual - x).abs(),
        Predictive::Gaussian { mean, std } => crps_gaussian(*mean, *std, actual),
        Predictive::Discrete(d) => crps_discrete(d, actual),
    }
}

/// Scores for one lead time over a validation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadScore {
    pub lead_min: u32,
    pub nmae: f64,
    pub nrmse: f64,
    pub plf: Option<f64>,
    pub crps: Option<f64>,
    pub n: u64,
}

/// Per-lead-time scores and their averages over lead times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub normalizer: f64,
    pub per_lead: Vec<LeadScore>,
    pub avg_nmae: f64,
    pub avg_nrmse: f64,
    pub avg_plf: Option<f64>,
    pub avg_crps: Option<f64>,
}

impl ScoreTable {
    pub fn from_leads(normalizer: f64, per_lead: Vec<LeadScore>) -> Self {
        let scored: Vec<&LeadScore> = per_lead.iter().filter(|l| l.n > 0).collect();
        let avg = |f: &dyn Fn(&LeadScore) -> f64| {
            if scored.is_empty() {
                f64::NAN
            } else {
                scored.iter().map(|l| f(l)).sum::<f64>() / scored.len() as f64
            }
        };
        let avg_opt = |f: &dyn Fn(&LeadScore) -> Option<f64>| -> Option<f64> {
            let vals: Option<Vec<f64>> = scored.iter().map(|l| f(l)).collect();
            vals.filter(|v| !v.is_empty())
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        ScoreTable {
            normalizer,
            avg_nmae: avg(&|l| l.nmae),
            avg_nrmse: avg(&|l| l.nrmse),
            avg_plf: avg_opt(&|l| l.plf),
            avg_crps: avg_opt(&|l| l.crps),
            per_lead,
        }
    }
}

/// Streaming sums for one lead time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreAccumulator {
    pub n: u64,
    pub abs_err: f64,
    pub sq_err: f64,
    pub plf: f64,
    pub crps: f64,
    pub probabilistic: bool,
}

impl ScoreAccumulator {
    pub fn add(&mut self, dist: &Predictive, actual: f64) {
        let e = actual - dist.mean();
        self.n += 1;
        self.abs_err += e.abs();
        self.sq_err += e * e;
        if dist.is_probabilistic() {
            self.probabilistic = true;
            self.plf += plf_score(dist, actual);
            self.crps += crps(dist, actual);
        }
    }

    pub fn merge(&mut self, other: &ScoreAccumulator) {
        self.n += other.n;
        self.abs_err += other.abs_err;
        self.sq_err += other.sq_err;
        self.plf += other.plf;
        self.crps += other.crps;
        self.probabilistic |= other.probabilistic;
    }

    pub fn finish(&self, lead_min: u32, normalizer: f64) -> LeadScore {
        let n = self.n as f64;
        let (nmae, nrmse, plf, crps) = if self.n == 0 {
            (f64::NAN, f64::NAN, None, None)
        } else {
            (
                100.0 * self.abs_err / n / normalizer,
                100.0 * (self.sq_err / n).sqrt() / normalizer,
                self.probabilistic.then(|| self.plf / n),
                self.probabilistic.then(|| self.crps / n),
            )
        };
        LeadScore {
            lead_min,
            nmae,
            nrmse,
            plf,
            crps,
            n: self.n,
        }
    }
}
