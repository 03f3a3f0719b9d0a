//! Uniform train/forecast interface over the three techniques.

use serde::{Deserialize, Serialize};

use super::schedule::Technique;
use crate::baselines::gp::{gp_train_direct, stride_subsample, GpConfig, GpModel};
use crate::baselines::mlp::{mlp_train, MlpConfig, MlpModel};
use crate::baselines::windows::{
    features_from_history, window_at, window_offsets, HISTORY_QUARTERS,
};
use crate::binning::BinScheme;
use crate::error::{Error, Result};
use crate::market_data::{Dataset, PriceMode, QuarterIndex, QuarterSpan};
use crate::metrics::Predictive;
use crate::transition::{estimate_transitions, TransitionMatrixSet};
use crate::tspa::TspaModel;

/// Hyperparameters shared by every vintage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub price_mode: PriceMode,
    /// `None` selects the default 22-bin scheme.
    pub bins: Option<BinScheme>,
    pub mlp: MlpConfig,
    pub gp: GpConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            price_mode: PriceMode::Positive,
            bins: None,
            mlp: MlpConfig::default(),
            gp: GpConfig::default(),
        }
    }
}

impl ModelSettings {
    /// Reduced baseline budgets for single-machine runs: at most 800
    /// training windows and 30 epochs for the MLP, 128 points and one
    /// optimizer start for the GP.
    pub fn desk() -> Self {
        ModelSettings {
            mlp: MlpConfig {
                epochs: 30,
                patience: 5,
                max_windows: Some(800),
                ..MlpConfig::default()
            },
            gp: GpConfig {
                max_points: 128,
                restarts: 1,
                max_iters: 25,
                ..GpConfig::default()
            },
            ..ModelSettings::default()
        }
    }

    pub fn scheme(&self) -> BinScheme {
        self.bins.clone().unwrap_or_else(BinScheme::default_scheme)
    }

    pub fn validate(&self) -> Result<()> {
        self.mlp.validate()?;
        self.gp.validate()
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Tspa(TransitionMatrixSet),
    Mlp(MlpModel),
    Gp(GpModel),
}

/// SplitMix64 finalizer, used to derive independent per-vintage seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn vintage_seed(base: u64, technique: Technique, month: u32, horizon: usize) -> u64 {
    let tag = match technique {
        Technique::Tspa => 1u64,
        Technique::Mlp => 2,
        Technique::Gp => 3,
    };
    mix_seed(base ^ mix_seed(tag << 48 | (month as u64) << 16 | horizon as u64))
}

/// Windows whose issue quarter and targets lie in `train`; the feature
/// history may reach up to 95 quarters before it.
fn training_windows(
    ds: &Dataset,
    train: QuarterSpan,
    horizon: usize,
    mode: PriceMode,
    cap: Option<usize>,
    seed: u64,
) -> Result<Vec<crate::baselines::FeatureWindow>> {
    let hist_start = std::cmp::max(ds.span().start, train.start - (HISTORY_QUARTERS as i64 - 1));
    let slice = ds.series.slice(QuarterSpan::new(hist_start, train.end))?;
    let first_issue = (train.start - hist_start) as usize;
    let offsets: Vec<usize> = window_offsets(&slice, horizon)
        .into_iter()
        .filter(|&i| i >= first_issue)
        .collect();
    if offsets.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no complete training window in {train} for horizon {horizon}"
        )));
    }
    let picked = match cap {
        Some(c) if offsets.len() > c => {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            stride_subsample(offsets.len(), c, &mut rng)
                .into_iter()
                .map(|i| offsets[i])
                .collect()
        }
        _ => offsets,
    };
    let prices = slice.target_prices(mode);
    Ok(picked
        .into_iter()
        .map(|i| window_at(&slice, &prices, i, horizon))
        .collect())
}

/// Fit one technique on `train` for lead times `1..=horizon`.
pub fn train_model(
    technique: Technique,
    ds: &Dataset,
    train: QuarterSpan,
    horizon: usize,
    settings: &ModelSettings,
    seed: u64,
) -> Result<TrainedModel> {
    match technique {
        Technique::Tspa => {
            let series = ds.series.slice(train)?;
            let leads: Vec<usize> = (1..=horizon).collect();
            Ok(TrainedModel::Tspa(estimate_transitions(
                &series,
                &settings.scheme(),
                &leads,
            )?))
        }
        Technique::Mlp => {
            let cfg = MlpConfig {
                seed,
                ..settings.mlp.clone()
            };
            let windows = training_windows(
                ds,
                train,
                horizon,
                settings.price_mode,
                cfg.max_windows,
                seed,
            )?;
            Ok(TrainedModel::Mlp(mlp_train(&windows, &cfg)?))
        }
        Technique::Gp => {
            let cfg = GpConfig {
                seed,
                ..settings.gp.clone()
            };
            let windows = training_windows(
                ds,
                train,
                horizon,
                settings.price_mode,
                Some(cfg.max_points),
                seed,
            )?;
            Ok(TrainedModel::Gp(gp_train_direct(&windows, horizon, &cfg)?))
        }
    }
}

impl TrainedModel {
    pub fn technique(&self) -> Technique {
        match self {
            TrainedModel::Tspa(_) => Technique::Tspa,
            TrainedModel::Mlp(_) => Technique::Mlp,
            TrainedModel::Gp(_) => Technique::Gp,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        match self {
            TrainedModel::Mlp(m) => m.warnings.clone(),
            TrainedModel::Gp(m) => m
                .heads
                .iter()
                .enumerate()
                .filter(|(_, h)| h.fallback)
                .map(|(k, _)| format!("gp lead {}: heuristic hyperparameters", k + 1))
                .collect(),
            TrainedModel::Tspa(_) => Vec::new(),
        }
    }

    /// Forecasts for lead times `1..=leads`, issued at `t`. Only series
    /// values up to and including `t` are read; the TSPA also reads the
    /// ARC table at `t + k`.
    pub fn forecast(
        &self,
        ds: &Dataset,
        t: QuarterIndex,
        leads: usize,
        mode: PriceMode,
    ) -> Result<Vec<Predictive>> {
        let i = ds.series.index_of(t).ok_or_else(|| Error::Range {
            quarter: t.to_string(),
            span: ds.span().to_string(),
        })?;
        let nrv = &ds.series.nrv()[..=i];
        match self {
            TrainedModel::Tspa(tm) => {
                let model = TspaModel::new(tm, &ds.arc);
                (1..=leads)
                    .map(|k| Ok(Predictive::Discrete(model.forecast(t, nrv[i], k)?)))
                    .collect()
            }
            TrainedModel::Mlp(m) => {
                let features = history_features(ds, i, mode)?;
                let out = m.predict(&features)?;
                check_leads(leads, out.len())?;
                Ok(out[..leads].iter().map(|v| Predictive::Point(*v)).collect())
            }
            TrainedModel::Gp(m) => {
                let features = history_features(ds, i, mode)?;
                check_leads(leads, m.horizon())?;
                let d = m.predict_all(&features)?;
                Ok(d[..leads]
                    .iter()
                    .map(|(mean, std)| Predictive::Gaussian {
                        mean: *mean,
                        std: *std,
                    })
                    .collect())
            }
        }
    }
}

fn check_leads(wanted: usize, available: usize) -> Result<()> {
    if wanted > available {
        return Err(Error::InvalidArgument(format!(
            "model covers {available} lead times, {wanted} requested"
        )));
    }
    Ok(())
}

/// Features for issue index `i`, built from series values at indices `<= i`.
fn history_features(ds: &Dataset, i: usize, mode: PriceMode) -> Result<Vec<f64>> {
    let lo = (i + 1).saturating_sub(HISTORY_QUARTERS);
    let prices: Vec<f64> = ds.series.pos_price()[lo..=i]
        .iter()
        .zip(&ds.series.neg_price()[lo..=i])
        .map(|(p, n)| crate::market_data::single_price(*p, *n, mode))
        .collect();
    features_from_history(&prices, &ds.series.nrv()[lo..=i])
}
