//! Probabilistic imbalance-price forecasting.
//!
//! The main forecaster estimates NRV transition matrices per lead time and
//! maps each reachable NRV bin to a price through the ARC table. Two
//! baselines (a multi-output perceptron and per-lead-time Gaussian
//! processes) and a rolling backtest harness are included.

pub mod backtest;
pub mod baselines;
pub mod binning;
pub mod error;
pub mod market_data;
pub mod metrics;
pub mod simgen;
pub mod transition;
pub mod tspa;

pub use binning::BinScheme;
pub use error::{Error, ErrorClass, Result};
pub use market_data::{
    ArcRange, ArcTable, BrpPosition, Dataset, GapPolicy, PriceMode, QuarterIndex, QuarterSeries,
    QuarterSpan, SettlementParams,
};
pub use metrics::{LeadScore, Predictive, ScoreTable};
pub use transition::{estimate_transitions, TransitionMatrix, TransitionMatrixSet};
pub use tspa::{igcc_shift, DiscretePriceDistribution, TspaModel};
