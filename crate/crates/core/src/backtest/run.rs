//! Rolling backtest execution and online scoring.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::models::{train_model, vintage_seed, ModelSettings, TrainedModel};
use super::schedule::{check_no_lookahead, plan, RollingSchedule, Technique, Vintage};
use crate::error::{Error, Result};
use crate::market_data::{Dataset, QuarterIndex, QUARTER_MINUTES};
use crate::metrics::{Predictive, ScoreAccumulator, ScoreTable};
use crate::tspa::Atom;

/// Which issue times are written to the forecast archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchivePolicy {
    None,
    All,
    /// Issue times on the first `days` days of the validation span.
    FirstDays {
        days: u32,
    },
    Dates {
        dates: Vec<NaiveDate>,
    },
}

impl Default for ArchivePolicy {
    fn default() -> Self {
        ArchivePolicy::FirstDays { days: 7 }
    }
}

impl ArchivePolicy {
    fn selects(&self, t: QuarterIndex, validation_start: QuarterIndex) -> bool {
        match self {
            ArchivePolicy::None => false,
            ArchivePolicy::All => true,
            ArchivePolicy::FirstDays { days } => (t - validation_start) < *days as i64 * 96,
            ArchivePolicy::Dates { dates } => dates.contains(&t.date()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub schedule: RollingSchedule,
    pub techniques: Vec<Technique>,
    pub seed: u64,
    /// Issue a forecast every `stride` quarters.
    pub stride: usize,
    /// Score normalizer in €/MWh; the mean absolute validation price when absent.
    pub normalizer: Option<f64>,
    pub models: ModelSettings,
    pub archive: ArchivePolicy,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            schedule: RollingSchedule::default(),
            techniques: Technique::ALL.to_vec(),
            seed: 0,
            stride: 1,
            normalizer: None,
            models: ModelSettings::default(),
            archive: ArchivePolicy::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.models.validate()?;
        if self.techniques.is_empty() {
            return Err(Error::InvalidArgument("no technique selected".into()));
        }
        let mut t = self.techniques.clone();
        t.sort();
        t.dedup();
        if t.len() != self.techniques.len() {
            return Err(Error::InvalidArgument("techniques must be distinct".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if let Some(n) = self.normalizer {
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "normalizer must be positive, got {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: BacktestConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One archived forecast for one lead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRow {
    pub issue: QuarterIndex,
    pub lead: usize,
    pub mean: f64,
    pub std: Option<f64>,
    pub actual: Option<f64>,
    pub atoms: Option<Vec<Atom>>,
}

/// Scores of one technique at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueRun {
    pub technique: Technique,
    pub horizon_min: u32,
    pub table: ScoreTable,
    /// Issue times attempted.
    pub issued: u64,
    /// Issue times dropped because the model or its inputs failed.
    pub excluded: u64,
    /// (issue, lead) pairs not scored because the actual was forward-filled.
    pub skipped_filled: u64,
    #[serde(skip)]
    pub archive: Vec<ArchiveRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub config: BacktestConfig,
    pub normalizer: f64,
    pub vintages: Vec<Vintage>,
    pub runs: Vec<TechniqueRun>,
    pub lookahead_checks: u64,
    pub warnings: Vec<String>,
    /// Transition heatmap CSVs of the last TSPA vintage, keyed by lead time.
    #[serde(skip)]
    pub heatmaps: BTreeMap<usize, String>,
}

impl BacktestResult {
    pub fn run(&self, technique: Technique, horizon_min: u32) -> Option<&TechniqueRun> {
        self.runs
            .iter()
            .find(|r| r.technique == technique && r.horizon_min == horizon_min)
    }
}

#[derive(Default)]
struct VintageOutcome {
    accs: Vec<ScoreAccumulator>,
    issued: u64,
    excluded: u64,
    skipped_filled: u64,
    checks: u64,
    archive: Vec<ArchiveRow>,
    warnings: Vec<String>,
    model: Option<TrainedModel>,
}

struct Ctx<'a> {
    ds: &'a Dataset,
    config: &'a BacktestConfig,
    prices: Vec<f64>,
    validation_start: QuarterIndex,
    validation_end: QuarterIndex,
}

fn run_vintage(ctx: &Ctx, v: &Vintage, leads: usize, horizon_tag: usize) -> Result<VintageOutcome> {
    let cfg = ctx.config;
    let mode = cfg.models.price_mode;
    let mut out = VintageOutcome {
        accs: vec![ScoreAccumulator::default(); leads],
        ..Default::default()
    };
    let seed = vintage_seed(cfg.seed, v.technique, v.month, horizon_tag);
    let model = match train_model(v.technique, ctx.ds, v.train, leads, &cfg.models, seed) {
        Ok(m) => Some(m),
        Err(e @ Error::LookAhead(_)) => return Err(e),
        Err(e) => {
            out.warnings.push(format!(
                "{} vintage {} (horizon {} min): training failed: {e}",
                v.technique,
                v.month,
                leads as i64 * QUARTER_MINUTES
            ));
            None
        }
    };
    if let Some(m) = &model {
        out.warnings.extend(
            m.warnings()
                .into_iter()
                .map(|w| format!("{} vintage {}: {w}", v.technique, v.month)),
        );
    }

    let offset = (v.predict.start - ctx.validation_start).rem_euclid(cfg.stride as i64);
    let first = if offset == 0 {
        v.predict.start
    } else {
        v.predict.start + (cfg.stride as i64 - offset)
    };
    let series = &ctx.ds.series;
    let mut t = first;
    while t < v.predict.end {
        check_no_lookahead(v, t)?;
        out.checks += 1;
        out.issued += 1;
        let usable = leads.min((ctx.validation_end - t - 1).max(0) as usize);
        let forecasts = match &model {
            Some(m) if usable > 0 => m.forecast(ctx.ds, t, usable, mode),
            Some(_) => Ok(Vec::new()),
            None => Err(Error::InsufficientData("no model".into())),
        };
        match forecasts {
            Ok(preds) => {
                let i = series.index_of(t).expect("validation inside dataset");
                let archived = cfg.archive.selects(t, ctx.validation_start);
                for (k0, pred) in preds.iter().enumerate() {
                    let j = i + k0 + 1;
                    let filled = series.filled()[j];
                    let actual = ctx.prices[j];
                    if filled {
                        out.skipped_filled += 1;
                    } else {
                        out.accs[k0].add(pred, actual);
                    }
                    if archived {
                        out.archive.push(ArchiveRow {
                            issue: t,
                            lead: k0 + 1,
                            mean: pred.mean(),
                            std: pred.is_probabilistic().then(|| pred.std()),
                            actual: (!filled).then_some(actual),
                            atoms: match pred {
                                Predictive::Discrete(d) => Some(d.atoms.clone()),
                                _ => None,
                            },
                        });
                    }
                }
            }
            Err(e @ Error::LookAhead(_)) => return Err(e),
            Err(e) => {
                out.excluded += 1;
                log::debug!("{} at {t}: {e}", v.technique);
            }
        }
        t = t + cfg.stride as i64;
    }
    out.model = model;
    Ok(out)
}

fn merge(outcomes: Vec<VintageOutcome>, leads: usize) -> VintageOutcome {
    let mut total = VintageOutcome {
        accs: vec![ScoreAccumulator::default(); leads],
        ..Default::default()
    };
    for o in outcomes {
        for (a, b) in total.accs.iter_mut().zip(&o.accs) {
            a.merge(b);
        }
        total.issued += o.issued;
        total.excluded += o.excluded;
        total.skipped_filled += o.skipped_filled;
        total.checks += o.checks;
        total.archive.extend(o.archive);
        total.warnings.extend(o.warnings);
        if o.model.is_some() {
            total.model = o.model;
        }
    }
    total
}

fn table(accs: &[ScoreAccumulator], normalizer: f64) -> ScoreTable {
    let leads = accs
        .iter()
        .enumerate()
        .map(|(k0, a)| a.finish(((k0 + 1) as i64 * QUARTER_MINUTES) as u32, normalizer))
        .collect();
    ScoreTable::from_leads(normalizer, leads)
}

/// Run every vintage of every technique and score all issued forecasts.
///
/// TSPA and GP submodels do not depend on the horizon, so they are fitted
/// once for the longest horizon and each horizon reads its leading lead
/// times. The MLP emits all lead times jointly and is fitted per horizon.
pub fn run(config: &BacktestConfig, ds: &Dataset) -> Result<BacktestResult> {
    config.validate()?;
    let vintages = plan(&config.schedule, ds.span(), &config.techniques)?;
    let vspan = config.schedule.validation_span();
    let prices = ds.series.target_prices(config.models.price_mode);
    let normalizer = match config.normalizer {
        Some(n) => n,
        None => {
            let a = (vspan.start - ds.span().start) as usize;
            let vals: Vec<f64> = (a..a + vspan.len())
                .filter(|&i| !ds.series.filled()[i])
                .map(|i| prices[i].abs())
                .collect();
            let n = crate::metrics::mean_abs(&vals)?;
            if !(n > 0.0) {
                return Err(Error::InsufficientData(
                    "validation prices are all zero; set a normalizer".into(),
                ));
            }
            n
        }
    };
    let ctx = Ctx {
        ds,
        config,
        prices,
        validation_start: vspan.start,
        validation_end: vspan.end,
    };
    let horizons = config.schedule.horizons();
    let tmax = *horizons.iter().max().expect("validated");

    let mut runs = Vec::new();
    let mut warnings = Vec::new();
    let mut checks = 0u64;
    let mut heatmaps = BTreeMap::new();
    for &technique in &config.techniques {
        let tv: Vec<&Vintage> = vintages
            .iter()
            .filter(|v| v.technique == technique)
            .collect();
        let per_horizon: Vec<(Vec<usize>, usize)> = match technique {
            Technique::Mlp => horizons.iter().map(|h| (vec![*h], *h)).collect(),
            _ => vec![(horizons.clone(), tmax)],
        };
        for (hs, leads) in per_horizon {
            log::info!("{technique}: {} vintages, {leads} lead times", tv.len());
            let outcomes = tv
                .par_iter()
                .map(|v| run_vintage(&ctx, v, leads, leads))
                .collect::<Result<Vec<_>>>()?;
            let total = merge(outcomes, leads);
            checks += total.checks;
            warnings.extend(total.warnings.iter().cloned());
            if let Some(TrainedModel::Tspa(tm)) = &total.model {
                for &h in &horizons {
                    heatmaps.insert(h, tm.export_heatmap(h)?);
                }
            }
            for h in hs {
                runs.push(TechniqueRun {
                    technique,
                    horizon_min: (h as i64 * QUARTER_MINUTES) as u32,
                    table: table(&total.accs[..h], normalizer),
                    issued: total.issued,
                    excluded: total.excluded,
                    skipped_filled: total.skipped_filled,
                    archive: total
                        .archive
                        .iter()
                        .filter(|r| r.lead <= h)
                        .cloned()
                        .collect(),
                });
            }
        }
    }
    runs.sort_by_key(|r| (r.horizon_min, r.technique));
    for r in &runs {
        if r.excluded > 0 {
            log::warn!(
                "{} at {} min: {} of {} issue times excluded",
                r.technique,
                r.horizon_min,
                r.excluded,
                r.issued
            );
        }
    }
    Ok(BacktestResult {
        config: config.clone(),
        normalizer,
        vintages,
        runs,
        lookahead_checks: checks,
        warnings,
        heatmaps,
    })
}
