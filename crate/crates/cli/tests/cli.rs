use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imbfc_core::backtest::BacktestConfig;

fn imbfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imbfc"))
        .args(args)
        .env("IMBFC_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, quarters: usize) -> PathBuf {
    let d = dir.join("data");
    let q = quarters.to_string();
    let o = imbfc(&["synth", "--seed", "7", "--quarters", &q, "--out", p(&d)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    d
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let o = imbfc(&["forecast", "--data", "x"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&imbfc(&["backtest"])), 1);
    assert_eq!(
        code(&imbfc(&["backtest", "--show-config", "--horizons", "20"])),
        1
    );
    assert_eq!(code(&imbfc(&["--help"])), 0);
}

#[test]
fn data_and_model_errors_map_to_their_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = imbfc(&["validate", "--data", p(&dir.path().join("absent"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    let d = synth(dir.path(), 10);
    let o = imbfc(&[
        "estimate",
        "--data",
        p(&d),
        "--out",
        p(&dir.path().join("e")),
        "--horizons",
        "360",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn show_config_prints_parseable_defaults() {
    let o = imbfc(&[
        "backtest",
        "--show-config",
        "--seed",
        "5",
        "--horizons",
        "15,60",
    ]);
    assert_eq!(code(&o), 0);
    let cfg = BacktestConfig::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.schedule.horizons_min, vec![15, 60]);
    assert_eq!(cfg.schedule.validation_months, 12);
}

#[test]
fn synth_validate_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path(), 3000);
    for f in ["nrv.csv", "prices.csv", "arc.csv", "truth.json"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let o = imbfc(&["validate", "--data", p(&d)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("quarters    3000"));

    let e = dir.path().join("est");
    let o = imbfc(&[
        "estimate",
        "--data",
        p(&d),
        "--out",
        p(&e),
        "--horizons",
        "15,60",
    ]);
    assert_eq!(code(&o), 0);
    assert!(e.join("transitions.json").is_file());
    for k in 1..=4 {
        assert!(e.join(format!("heatmaps/transition_k{k:02}.csv")).is_file());
    }
}

#[test]
fn tspa_forecast_has_one_row_per_lead() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path(), 5000);
    let out = dir.path().join("f.csv");
    let args = [
        "forecast",
        "--data",
        p(&d),
        "--technique",
        "tspa",
        "--at",
        "2017-02-08T12:00Z",
        "--horizon",
        "360",
        "--out",
        p(&out),
    ];
    let o = imbfc(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text, String::from_utf8(o.stdout).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "technique,issue_time,lead_min,mean,std,atoms_json"
    );
    assert_eq!(lines.len(), 25);
    assert!(lines[24].starts_with("tspa,2017-02-08T12:00:00Z,360,"));
    assert_eq!(imbfc(&args).stdout, text.as_bytes());
}

#[test]
fn forecast_all_techniques_on_desk_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path(), 5000);
    let o = imbfc(&[
        "forecast",
        "--data",
        p(&d),
        "--technique",
        "all",
        "--at",
        "2017-02-08T12:00Z",
        "--horizon",
        "60",
        "--desk",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let techs: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(techs.len(), 12);
    assert_eq!(techs.iter().filter(|t| **t == "mlp").count(), 4);
    assert_eq!(techs.iter().filter(|t| **t == "gp").count(), 4);
}

#[test]
fn backtest_report_tree_is_complete_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path(), 9000);
    let run = |out: &Path| {
        let o = imbfc(&[
            "--jobs",
            "1",
            "backtest",
            "--data",
            p(&d),
            "--out",
            p(out),
            "--desk",
            "--horizons",
            "15,60",
            "--origin",
            "2017-01-01",
            "--validation-start",
            "2017-03-01",
            "--months",
            "1",
            "--stride",
            "16",
            "--seed",
            "3",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        tree(out)
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b);
    let names: Vec<String> = a.keys().map(|k| k.to_string_lossy().into_owned()).collect();
    for f in [
        "scores/aggregate.csv",
        "scores/per_lead.csv",
        "scores/per_horizon.csv",
        "forecasts/tspa_60min.csv",
        "forecasts/gp_15min.csv",
        "heatmaps/transition_k04.csv",
        "charts/crps_60min.svg",
        "run_info.json",
        "config.json",
    ] {
        assert!(names.iter().any(|n| n == f), "missing {f}");
    }
    let agg = String::from_utf8(a[Path::new("scores/aggregate.csv")].clone()).unwrap();
    assert_eq!(agg.lines().count(), 1 + 3 * 2);
}
