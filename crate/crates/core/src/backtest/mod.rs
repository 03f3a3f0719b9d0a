//! Rolling-origin evaluation: monthly model refresh, one forecast per
//! issue quarter over the validation span, scoring and report emission.

pub mod models;
pub mod report;
pub mod run;
pub mod schedule;
pub mod svg;

pub use models::{train_model, vintage_seed, ModelSettings, TrainedModel};
pub use report::{forecast_csv, write_report};
pub use run::{run, ArchivePolicy, ArchiveRow, BacktestConfig, BacktestResult, TechniqueRun};
pub use schedule::{
    check_horizons, check_no_lookahead, parse_horizons, plan, train_span_for, LsPolicy,
    RollingSchedule, Technique, Vintage,
};
