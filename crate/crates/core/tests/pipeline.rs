use chrono::NaiveDate;
use imbfc_core::backtest::{run, ArchivePolicy, BacktestConfig, RollingSchedule, Technique};
use imbfc_core::market_data::{ARC_RANGES, NRV_FILE};
use imbfc_core::simgen::{generate, ArcGenerator, SynthSpec};
use imbfc_core::{Dataset, Error, GapPolicy};

fn tspa_config(horizons: Vec<u32>) -> BacktestConfig {
    BacktestConfig {
        schedule: RollingSchedule {
            origin: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
            validation_start: NaiveDate::from_ymd_opt(2017, 2, 1).unwrap(),
            validation_months: 1,
            horizons_min: horizons,
            ..RollingSchedule::default()
        },
        techniques: vec![Technique::Tspa],
        stride: 7,
        archive: ArchivePolicy::None,
        ..BacktestConfig::default()
    }
}

fn spec(quarters: usize) -> SynthSpec {
    SynthSpec {
        quarters,
        seed: 9,
        ..SynthSpec::default()
    }
}

#[test]
fn generated_dataset_survives_a_csv_round_trip() {
    let ds = generate(&SynthSpec {
        jitter: true,
        ..spec(2000)
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.write_dir(dir.path()).unwrap();
    let back = Dataset::load_dir(dir.path(), GapPolicy::Error).unwrap();
    assert_eq!(back.series, ds.series);
    assert_eq!(back.arc, ds.arc);
}

#[test]
fn flat_arc_prices_make_tspa_exact() {
    // Every activation range priced alike: the forecast is a point mass on the actual.
    let arc = ArcGenerator::Constant {
        prices: [50.0; ARC_RANGES],
    };
    let ds = generate(&SynthSpec {
        arc,
        ..spec(96 * 60)
    })
    .unwrap();
    let r = run(&tspa_config(vec![15, 60]), &ds).unwrap();
    assert_eq!(r.normalizer, 50.0);
    for t in &r.runs {
        // Means are probability-weighted sums, exact only up to rounding.
        assert!(t.table.avg_nmae < 1e-9);
        assert!(t.table.avg_nrmse < 1e-9);
        assert!(t.table.avg_crps.unwrap() < 1e-9);
        assert!(t.table.avg_plf.unwrap() < 1e-9);
        assert_eq!(t.excluded, 0);
    }
}

#[test]
fn six_hour_horizon_scores_24_lead_times() {
    let ds = generate(&spec(96 * 60)).unwrap();
    let r = run(&tspa_config(vec![360]), &ds).unwrap();
    let leads: Vec<u32> = r.runs[0]
        .table
        .per_lead
        .iter()
        .map(|l| l.lead_min)
        .collect();
    assert_eq!(leads, (1..=24).map(|k| 15 * k).collect::<Vec<u32>>());
    assert!(r.lookahead_checks >= r.runs[0].issued);
}

#[test]
fn schedule_beyond_the_data_is_a_coverage_error() {
    let ds = generate(&spec(96 * 20)).unwrap();
    assert!(matches!(
        run(&tspa_config(vec![15]), &ds),
        Err(Error::Coverage(_))
    ));
}

#[test]
fn forward_filled_actuals_are_not_scored() {
    let ds = generate(&spec(96 * 60)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.write_dir(dir.path()).unwrap();
    // Drop one validation-month quarter from the NRV file.
    let path = dir.path().join(NRV_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let gap = 96 * 40 + 3;
    let kept: Vec<&str> = text
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != gap + 1)
        .map(|(_, l)| l)
        .collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();

    assert!(Dataset::load_dir(dir.path(), GapPolicy::Error).is_err());
    let filled = Dataset::load_dir(dir.path(), GapPolicy::ForwardFill).unwrap();
    assert_eq!(filled.series.filled_count(), 1);
    let cfg = BacktestConfig {
        stride: 1,
        ..tspa_config(vec![60])
    };
    let r = run(&cfg, &filled).unwrap();
    // The filled quarter is the target of four (issue, lead) pairs.
    assert_eq!(r.runs[0].skipped_filled, 4);
}
