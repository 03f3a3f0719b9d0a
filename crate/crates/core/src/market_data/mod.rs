//! Domain types, CSV ingestion and imbalance settlement rules.

mod csv_io;
mod series;
mod settlement;
mod time;

pub use csv_io::{parse_quarter_csv, write_quarter_csv, CsvKind, GapPolicy, QuarterFrame};
pub use series::{
    ArcRange, ArcTable, Dataset, QuarterSeries, ARC_FILE, ARC_RANGES, NRV_FILE, PRICES_FILE,
};
pub use settlement::{settle_prices, single_price, BrpPosition, PriceMode, SettlementParams};
pub use time::{QuarterIndex, QuarterSpan, QUARTER_MINUTES};
