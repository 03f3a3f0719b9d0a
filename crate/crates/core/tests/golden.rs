//! Snapshot of the score tables from a small seeded synthetic backtest.
//! Regenerate with `UPDATE_GOLDEN=1 cargo test -p imbfc-core --test golden`.

use std::path::PathBuf;

use chrono::NaiveDate;
use imbfc_core::backtest::report::{aggregate_csv, per_horizon_csv, per_lead_csv};
use imbfc_core::backtest::{run, ArchivePolicy, BacktestConfig, ModelSettings, RollingSchedule};
use imbfc_core::simgen::{generate, SynthSpec};

fn config() -> BacktestConfig {
    let mut models = ModelSettings::desk();
    models.mlp.epochs = 5;
    models.mlp.max_windows = Some(200);
    models.gp.max_points = 48;
    models.gp.max_iters = 10;
    BacktestConfig {
        schedule: RollingSchedule {
            origin: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
            validation_start: NaiveDate::from_ymd_opt(2017, 2, 1).unwrap(),
            validation_months: 2,
            horizons_min: vec![15, 60],
            ..RollingSchedule::default()
        },
        seed: 42,
        stride: 24,
        models,
        archive: ArchivePolicy::None,
        ..BacktestConfig::default()
    }
}

#[test]
fn score_tables_match_snapshots() {
    let ds = generate(&SynthSpec {
        quarters: 96 * 91,
        seed: 5,
        jitter: true,
        ..SynthSpec::default()
    })
    .unwrap();
    let result = run(&config(), &ds).unwrap();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for (name, text) in [
        ("aggregate.csv", aggregate_csv(&result)),
        ("per_lead.csv", per_lead_csv(&result)),
        ("per_horizon.csv", per_horizon_csv(&result)),
    ] {
        let path = dir.join(name);
        if update {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("{} missing; run with UPDATE_GOLDEN=1", path.display()));
        assert_eq!(text, want, "{name} drifted from its snapshot");
    }
}
