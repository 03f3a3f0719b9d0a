//! `imbfc`: ingest, estimate, forecast, backtest and synthesize
//! imbalance-price data from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imbfc_core::backtest::{
    self, forecast_csv, parse_horizons, train_model, train_span_for, vintage_seed, BacktestConfig,
    ModelSettings, RollingSchedule, Technique,
};
use imbfc_core::metrics::REFERENCE_NORMALIZER;
use imbfc_core::simgen::{self, SynthSpec};
use imbfc_core::{
    estimate_transitions, BinScheme, Dataset, Error, ErrorClass, GapPolicy, QuarterIndex, Result,
};

#[derive(Parser, Debug)]
#[command(
    name = "imbfc",
    version,
    about = "Probabilistic imbalance-price forecasting"
)]
struct Cli {
    /// Cap on worker threads (defaults to the number of cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest a data directory and report its quality.
    Validate(ValidateArgs),
    /// Fit transition matrices and export them with per-lead heatmaps.
    Estimate(EstimateArgs),
    /// Train on the month before `--at` and forecast one issue time.
    Forecast(ForecastArgs),
    /// Rolling-origin backtest with full report tree.
    Backtest(BacktestArgs),
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Directory holding nrv.csv, prices.csv and arc.csv.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Forward-fill missing quarters instead of rejecting them.
    #[arg(long)]
    allow_gaps: bool,
    /// User-supplied market data: implies --allow-gaps and the reference normalizer.
    #[arg(long)]
    real_data: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let gaps = if self.allow_gaps || self.real_data {
            GapPolicy::ForwardFill
        } else {
            GapPolicy::Error
        };
        Dataset::load_dir(&self.data, gaps)
    }
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Largest horizon sets the lead times `1..=H/15`.
    #[arg(long, default_value = "15,60,360")]
    horizons: String,
    /// Bin scheme JSON (`edges`, `centers`); the default 22-bin scheme otherwise.
    #[arg(long, value_name = "FILE")]
    bins: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[command(flatten)]
    data: DataArgs,
    /// tspa, mlp, gp or all.
    #[arg(long, default_value = "tspa")]
    technique: String,
    /// Issue time, e.g. 2018-01-08T12:00Z.
    #[arg(long, value_name = "TS")]
    at: String,
    /// Horizon in minutes.
    #[arg(long, default_value_t = 360)]
    horizon: u32,
    /// Also write the forecast CSV to this file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Backtest config JSON whose model settings and policies apply.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Reduced baseline budgets.
    #[arg(long)]
    desk: bool,
}

#[derive(Args, Debug)]
struct BacktestArgs {
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    horizons: Option<String>,
    /// tspa, mlp, gp or all.
    #[arg(long)]
    technique: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Issue a forecast every N quarters.
    #[arg(long, value_name = "N")]
    stride: Option<usize>,
    /// Full config JSON; flags given explicitly override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    show_config: bool,
    /// Reduced baseline budgets.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    real_data: bool,
    #[arg(long)]
    allow_gaps: bool,
    /// First day of the earliest learning set (YYYY-MM-DD).
    #[arg(long, value_name = "DATE")]
    origin: Option<chrono::NaiveDate>,
    /// First day of the first validation month (YYYY-MM-DD).
    #[arg(long, value_name = "DATE")]
    validation_start: Option<chrono::NaiveDate>,
    /// Number of validation months.
    #[arg(long, value_name = "N")]
    months: Option<u32>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quarters: Option<usize>,
    /// Generator spec JSON; flags given explicitly override it.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// First quarter, e.g. 2017-01-01T00:00Z.
    #[arg(long, value_name = "TS")]
    start: Option<String>,
    /// Sample NRV uniformly inside each bin instead of at its center.
    #[arg(long)]
    jitter: bool,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn parse_techniques(s: &str) -> Result<Vec<Technique>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Technique::ALL.to_vec());
    }
    s.split(',').map(str::parse).collect()
}

fn horizon_quarters(minutes: u32) -> Result<usize> {
    backtest::check_horizons(&[minutes])?;
    Ok(minutes as usize / 15)
}

/// Write to stdout; a reader that hung up early is not an error.
fn emit(s: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(s.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn stats(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, mean, max)
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let ds = a.data.load()?;
    let s = &ds.series;
    let mut out = String::new();
    writeln!(out, "span        {}", ds.span()).unwrap();
    writeln!(out, "quarters    {}", s.len()).unwrap();
    writeln!(out, "filled      {}", s.filled_count()).unwrap();
    for (name, col) in [
        ("nrv_mw", s.nrv()),
        ("pos_price", s.pos_price()),
        ("neg_price", s.neg_price()),
    ] {
        let (min, mean, max) = stats(col);
        writeln!(out, "{name:<11} min {min:.3} mean {mean:.3} max {max:.3}").unwrap();
    }
    let up = s.nrv().iter().filter(|v| **v > 0.0).count();
    let beyond = s.nrv().iter().filter(|v| v.abs() > 1100.0).count();
    writeln!(out, "nrv>0       {up}").unwrap();
    writeln!(out, "|nrv|>1100  {beyond}").unwrap();
    let non_monotone = ds
        .arc
        .rows()
        .iter()
        .filter(|r| r.windows(2).any(|w| w[1] < w[0]))
        .count();
    writeln!(out, "arc rows not monotone {non_monotone}").unwrap();
    emit(&out)
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let ds = a.data.load()?;
    let hs = parse_horizons(&a.horizons)?;
    let max = *hs.iter().max().expect("non-empty") as usize / 15;
    let scheme = match &a.bins {
        Some(p) => BinScheme::from_json_file(p)?,
        None => BinScheme::default_scheme(),
    };
    let leads: Vec<usize> = (1..=max).collect();
    let set = estimate_transitions(&ds.series, &scheme, &leads)?;
    std::fs::create_dir_all(a.out.join("heatmaps"))?;
    std::fs::write(a.out.join("transitions.json"), set.to_json()? + "\n")?;
    for k in &leads {
        std::fs::write(
            a.out.join(format!("heatmaps/transition_k{k:02}.csv")),
            set.export_heatmap(*k)?,
        )?;
    }
    let flagged: usize = leads
        .iter()
        .map(|k| set.matrix(*k).map(|m| m.fallback_rows().len()))
        .sum::<Result<usize>>()?;
    emit(&format!(
        "estimated {} lead times over {} quarters; {flagged} zero-count rows fell back to the marginal\n",
        leads.len(),
        ds.series.len()
    ))
}

fn load_config(path: Option<&Path>) -> Result<BacktestConfig> {
    match path {
        Some(p) => BacktestConfig::from_json(&read_text(p)?),
        None => Ok(BacktestConfig::default()),
    }
}

fn cmd_forecast(a: &ForecastArgs) -> Result<()> {
    let techniques = parse_techniques(&a.technique)?;
    let horizon = horizon_quarters(a.horizon)?;
    let t = QuarterIndex::parse(&a.at)?;
    let mut cfg = load_config(a.config.as_deref())?;
    if a.desk {
        cfg.models = ModelSettings::desk();
    }
    cfg.models.validate()?;
    let ds = a.data.load()?;
    let mut rows = Vec::new();
    for tech in techniques {
        let train = train_span_for(cfg.schedule.policy(tech), ds.span().start, t)?;
        let seed = vintage_seed(a.seed, tech, 0, horizon);
        let model = train_model(tech, &ds, train, horizon, &cfg.models, seed)?;
        for w in model.warnings() {
            log::warn!("{tech}: {w}");
        }
        rows.push((
            tech,
            t,
            model.forecast(&ds, t, horizon, cfg.models.price_mode)?,
        ));
    }
    let csv = forecast_csv(&rows);
    if let Some(p) = &a.out {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(p, &csv)?;
    }
    emit(&csv)
}

fn backtest_config(a: &BacktestArgs) -> Result<BacktestConfig> {
    let mut cfg = load_config(a.config.as_deref())?;
    if a.desk {
        cfg.models = ModelSettings::desk();
    }
    if let Some(h) = &a.horizons {
        cfg.schedule.horizons_min = parse_horizons(h)?;
    }
    if let Some(t) = &a.technique {
        cfg.techniques = parse_techniques(t)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.stride {
        cfg.stride = s;
    }
    let sched: &mut RollingSchedule = &mut cfg.schedule;
    if let Some(d) = a.origin {
        sched.origin = d;
    }
    if let Some(d) = a.validation_start {
        sched.validation_start = d;
    }
    if let Some(m) = a.months {
        sched.validation_months = m;
    }
    if a.real_data && cfg.normalizer.is_none() {
        cfg.normalizer = Some(REFERENCE_NORMALIZER);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_backtest(a: &BacktestArgs) -> Result<()> {
    let cfg = backtest_config(a)?;
    if a.show_config {
        return emit(&(cfg.to_json()? + "\n"));
    }
    let (Some(data), Some(out)) = (&a.data, &a.out) else {
        return Err(Error::InvalidArgument(
            "backtest needs --data and --out (or --show-config)".into(),
        ));
    };
    let gaps = if a.allow_gaps || a.real_data {
        GapPolicy::ForwardFill
    } else {
        GapPolicy::Error
    };
    let ds = Dataset::load_dir(data, gaps)?;
    let result = backtest::run(&cfg, &ds)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    backtest::write_report(&result, out)?;
    std::fs::write(out.join("config.json"), cfg.to_json()? + "\n")?;
    emit(&backtest::report::aggregate_csv(&result))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::from_json(&read_text(p)?)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(q) = a.quarters {
        spec.quarters = q;
    }
    if let Some(s) = &a.start {
        spec.start = QuarterIndex::parse(s)?;
    }
    if a.jitter {
        spec.jitter = true;
    }
    let ds = simgen::generate(&spec)?;
    simgen::write_with_truth(&spec, &ds, &a.out)?;
    emit(&format!(
        "wrote {} quarters ({}) to {}\n",
        ds.series.len(),
        ds.span(),
        a.out.display()
    ))
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Model => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMBFC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    let res = match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
