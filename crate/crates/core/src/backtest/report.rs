//! Report tree written after a backtest:
//!
//! ```text
//! scores/aggregate.csv    technique x horizon, averages over lead times
//! scores/per_lead.csv     one row per technique, horizon and lead time
//! scores/per_horizon.csv  one row per technique and metric, one column per horizon
//! forecasts/<tech>_<H>min.csv
//! heatmaps/transition_k<k>.csv
//! charts/<metric>_<H>min.svg
//! run_info.json
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::run::{BacktestResult, TechniqueRun};
use super::schedule::Technique;
use super::svg::{line_chart, Series};
use crate::error::Result;
use crate::market_data::QuarterIndex;
use crate::metrics::{LeadScore, Predictive};

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        String::new()
    }
}

fn fmt_o(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

pub fn aggregate_csv(result: &BacktestResult) -> String {
    let mut s = String::from("technique,horizon_min,nmae,nrmse,plf,crps,issued,excluded\n");
    for r in &result.runs {
        let t = &r.table;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.technique,
            r.horizon_min,
            fmt_f(t.avg_nmae),
            fmt_f(t.avg_nrmse),
            fmt_o(t.avg_plf),
            fmt_o(t.avg_crps),
            r.issued,
            r.excluded
        )
        .unwrap();
    }
    s
}

pub fn per_lead_csv(result: &BacktestResult) -> String {
    let mut s = String::from("technique,horizon_min,lead_min,nmae,nrmse,plf,crps,n\n");
    for r in &result.runs {
        for l in &r.table.per_lead {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.technique,
                r.horizon_min,
                l.lead_min,
                fmt_f(l.nmae),
                fmt_f(l.nrmse),
                fmt_o(l.plf),
                fmt_o(l.crps),
                l.n
            )
            .unwrap();
        }
    }
    s
}

const METRICS: [&str; 4] = ["nmae", "nrmse", "plf", "crps"];

fn avg_metric(r: &TechniqueRun, m: &str) -> Option<f64> {
    let t = &r.table;
    match m {
        "nmae" => Some(t.avg_nmae),
        "nrmse" => Some(t.avg_nrmse),
        "plf" => t.avg_plf,
        _ => t.avg_crps,
    }
}

fn lead_metric(l: &LeadScore, m: &str) -> Option<f64> {
    match m {
        "nmae" => Some(l.nmae),
        "nrmse" => Some(l.nrmse),
        "plf" => l.plf,
        _ => l.crps,
    }
}

pub fn per_horizon_csv(result: &BacktestResult) -> String {
    let horizons = &result.config.schedule.horizons_min;
    let mut s = String::from("technique,metric");
    for h in horizons {
        write!(s, ",h{h}").unwrap();
    }
    s.push('\n');
    for &tech in &result.config.techniques {
        for m in METRICS {
            write!(s, "{tech},{m}").unwrap();
            for &h in horizons {
                let v = result.run(tech, h).and_then(|r| avg_metric(r, m));
                write!(s, ",{}", fmt_o(v)).unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn archive_csv(run: &TechniqueRun) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "issue_time",
        "lead_min",
        "mean",
        "std",
        "actual",
        "atoms_json",
    ])
    .expect("in-memory write");
    for row in &run.archive {
        let atoms = row.atoms.as_ref().map(|a| {
            let pairs: Vec<[f64; 2]> = a.iter().map(|a| [a.price, a.prob]).collect();
            serde_json::to_string(&pairs).expect("finite atoms")
        });
        w.write_record([
            row.issue.to_string(),
            (row.lead * 15).to_string(),
            row.mean.to_string(),
            row.std.map(|v| v.to_string()).unwrap_or_default(),
            row.actual.map(|v| v.to_string()).unwrap_or_default(),
            atoms.unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// `technique,issue_time,lead_min,mean,std,atoms_json` rows for one issue time.
pub fn forecast_csv(rows: &[(Technique, QuarterIndex, Vec<Predictive>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "technique",
        "issue_time",
        "lead_min",
        "mean",
        "std",
        "atoms_json",
    ])
    .expect("in-memory write");
    for (tech, issue, preds) in rows {
        for (k0, p) in preds.iter().enumerate() {
            let atoms = match p {
                Predictive::Discrete(d) => d.atoms_json(),
                _ => String::new(),
            };
            w.write_record([
                tech.to_string(),
                issue.to_string(),
                ((k0 + 1) * 15).to_string(),
                p.mean().to_string(),
                if p.is_probabilistic() {
                    p.std().to_string()
                } else {
                    String::new()
                },
                atoms,
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn chart(result: &BacktestResult, horizon_min: u32, metric: &str) -> String {
    let series: Vec<Series> = result
        .runs
        .iter()
        .filter(|r| r.horizon_min == horizon_min)
        .map(|r| Series {
            label: r.technique.name(),
            points: r
                .table
                .per_lead
                .iter()
                .filter_map(|l| lead_metric(l, metric).map(|v| (l.lead_min as f64, v)))
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    let unit = if metric.starts_with('n') {
        "%"
    } else {
        "€/MWh"
    };
    line_chart(
        &format!(
            "{} per lead time, horizon {horizon_min} min",
            metric.to_uppercase()
        ),
        "lead time (min)",
        &format!("{} ({unit})", metric.to_uppercase()),
        &series,
    )
}

#[derive(Serialize)]
struct RunInfo<'a> {
    normalizer: f64,
    lookahead_checks: u64,
    stride: usize,
    vintages: usize,
    runs: Vec<RunCounts>,
    warnings: &'a [String],
    config: &'a super::run::BacktestConfig,
}

#[derive(Serialize)]
struct RunCounts {
    technique: String,
    horizon_min: u32,
    issued: u64,
    excluded: u64,
    skipped_filled: u64,
}

pub fn run_info_json(result: &BacktestResult) -> Result<String> {
    let info = RunInfo {
        normalizer: result.normalizer,
        lookahead_checks: result.lookahead_checks,
        stride: result.config.stride,
        vintages: result.vintages.len(),
        runs: result
            .runs
            .iter()
            .map(|r| RunCounts {
                technique: r.technique.to_string(),
                horizon_min: r.horizon_min,
                issued: r.issued,
                excluded: r.excluded,
                skipped_filled: r.skipped_filled,
            })
            .collect(),
        warnings: &result.warnings,
        config: &result.config,
    };
    Ok(serde_json::to_string_pretty(&info)? + "\n")
}

/// Write the full report tree under `dir`.
pub fn write_report(result: &BacktestResult, dir: &Path) -> Result<()> {
    for sub in ["scores", "forecasts", "heatmaps", "charts"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    std::fs::write(dir.join("scores/aggregate.csv"), aggregate_csv(result))?;
    std::fs::write(dir.join("scores/per_lead.csv"), per_lead_csv(result))?;
    std::fs::write(dir.join("scores/per_horizon.csv"), per_horizon_csv(result))?;
    for r in &result.runs {
        if !r.archive.is_empty() {
            let name = format!("forecasts/{}_{}min.csv", r.technique, r.horizon_min);
            std::fs::write(dir.join(name), archive_csv(r))?;
        }
    }
    for (k, csv) in &result.heatmaps {
        std::fs::write(dir.join(format!("heatmaps/transition_k{k:02}.csv")), csv)?;
    }
    for &h in &result.config.schedule.horizons_min {
        if result.runs.iter().any(|r| r.horizon_min == h) {
            for m in METRICS {
                std::fs::write(
                    dir.join(format!("charts/{m}_{h}min.svg")),
                    chart(result, h, m),
                )?;
            }
        }
    }
    std::fs::write(dir.join("run_info.json"), run_info_json(result)?)?;
    Ok(())
}
