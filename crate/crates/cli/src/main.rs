//! `exsim`: single runs, confidence-grid sweeps, noise sweeps, summary
//! tables and heatmaps.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use exsim_core::engine::{DeltaSign, MarketParams, TickMode};
use exsim_core::regimes::{EpsilonSigma, RegimeKind, RegimeParams, TraAnchor};
use exsim_core::report::{self, ColorScale, TableId};
use exsim_core::rng::DEFAULT_BASE_SEED;
use exsim_core::simulation::{run_series, RunConfig};
use exsim_core::sweep::{self, RunOptions, SweepConfig, SweepOutcome};

use crate::config::ConfigFile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] exsim_core::Error),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use exsim_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(E::InvalidConfig(_) | E::InvalidArgument(_) | E::UnknownMetric { .. }) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "exsim", version, about = "Share-exchange price formation under alternative common-knowledge regimes")]
struct Cli {
    /// `key = value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one series and write its per-period records as CSV.
    Run(RunArgs),
    /// Sweep the (m_S, m_D) grid with replications and write cell aggregates.
    Sweep(SweepArgs),
    /// Mean and median price as a function of the noise amplitude a.
    Asweep(ASweepArgs),
    /// Render a summary table from sweep outputs.
    Report(ReportArgs),
    /// Render an SVG heatmap of one metric from sweep outputs.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Periods per series.
    #[arg(long)]
    periods: Option<usize>,
    /// Base seed (sweeps) or run seed (run).
    #[arg(long)]
    seed: Option<u64>,
    /// Noise amplitude a.
    #[arg(long)]
    a: Option<f64>,
    /// Trend coefficient range b.
    #[arg(long)]
    b: Option<f64>,
    /// Sign of the forecast-revision term: minus or plus.
    #[arg(long)]
    delta_sign: Option<DeltaSign>,
    /// Fallback tick: uniform or gaussian.
    #[arg(long)]
    tick_mode: Option<TickMode>,
    /// Reversion anchor of the target regimes: fixed, cumulated or lagged-flow.
    #[arg(long)]
    tra_anchor: Option<TraAnchor>,
    /// Noise width convention: unit or scaled.
    #[arg(long)]
    epsilon_sigma: Option<EpsilonSigma>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Grid spacing of m_S and m_D; must divide 1.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Replications per cell.
    #[arg(long)]
    reps: Option<u32>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "EXSIM_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Regime: hca, hrt, fva, tra-f or tra-s.
    #[arg(long)]
    regime: Option<RegimeKind>,
    /// Supply-side confidence m_S.
    #[arg(long)]
    m_s: Option<f64>,
    /// Demand-side confidence m_D.
    #[arg(long)]
    m_d: Option<f64>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated regimes, or `all`.
    #[arg(long)]
    regime: Option<String>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write every simulated series.
    #[arg(long)]
    keep_series: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct ASweepArgs {
    /// Comma-separated regimes, or `all`.
    #[arg(long)]
    regime: Option<String>,
    /// Comma-separated noise amplitudes (default 0, 0.05, ..., 0.5).
    #[arg(long = "a-values")]
    a_values: Option<String>,
    /// Fix m_S (requires --m-d); otherwise the whole grid is swept.
    #[arg(long, requires = "m_d")]
    m_s: Option<f64>,
    #[arg(long, requires = "m_s")]
    m_d: Option<f64>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding sweep outputs.
    #[arg(long, default_value = "out")]
    input: PathBuf,
    /// prices, volatility, width, exuberance, dissociation, liquidity, corr, corr-lag or all.
    #[arg(long, default_value = "prices")]
    table: String,
    /// Comma-separated regimes; every regime found in the input by default.
    #[arg(long)]
    regime: Option<String>,
    /// text or csv.
    #[arg(long, default_value = "text")]
    format: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Directory holding sweep outputs.
    #[arg(long, default_value = "out")]
    input: PathBuf,
    #[arg(long)]
    regime: Option<RegimeKind>,
    /// Column name from the cells CSV, without the _mean/_median suffix.
    #[arg(long)]
    metric: Option<String>,
    /// Plot the across-replication median instead of the mean.
    #[arg(long)]
    median: bool,
    /// linear or log10; log10 by default for price levels of the fva regime.
    #[arg(long)]
    scale: Option<ColorScale>,
    /// Output SVG (default `<input>/<regime>_<metric>.svg`).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn pick<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

fn parse_regimes(list: &str) -> Result<Vec<RegimeKind>, CliError> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(RegimeKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let r: RegimeKind = item.parse().map_err(|e: exsim_core::Error| CliError::Usage(e.to_string()))?;
        if !out.contains(&r) {
            out.push(r);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("empty regime list".into()));
    }
    Ok(out)
}

fn parse_floats(list: &str, what: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad {what} value `{s}`"))))
        .collect()
}

fn regimes_or(flag: Option<String>, cfg: &ConfigFile, default: &[RegimeKind]) -> Result<Vec<RegimeKind>, CliError> {
    match flag.or_else(|| cfg.raw("regime").map(String::from)) {
        Some(list) => parse_regimes(&list),
        None => Ok(default.to_vec()),
    }
}

fn model_params(m: &ModelArgs, cfg: &ConfigFile) -> Result<(MarketParams, RegimeParams, usize, u64), CliError> {
    let mut market = MarketParams::default();
    let mut regime = RegimeParams::default();
    if let Some(v) = pick(m.delta_sign, cfg, "delta-sign")? {
        market.delta_sign = v;
    }
    if let Some(v) = pick(m.tick_mode, cfg, "tick-mode")? {
        market.tick_mode = v;
    }
    if let Some(v) = pick(m.a, cfg, "a")? {
        regime.a = v;
    }
    if let Some(v) = pick(m.b, cfg, "b")? {
        regime.b = v;
    }
    if let Some(v) = pick(m.tra_anchor, cfg, "tra-anchor")? {
        regime.tra_anchor = v;
    }
    if let Some(v) = pick(m.epsilon_sigma, cfg, "epsilon-sigma")? {
        regime.epsilon_sigma = v;
    }
    let periods = pick(m.periods, cfg, "periods")?.unwrap_or(500);
    let seed = pick(m.seed, cfg, "seed")?.unwrap_or(DEFAULT_BASE_SEED);
    Ok((market, regime, periods, seed))
}

fn sweep_config(
    regimes: Vec<RegimeKind>,
    grid: &GridArgs,
    model: &ModelArgs,
    cfg: &ConfigFile,
) -> Result<SweepConfig, CliError> {
    let (market, regime_params, periods, base_seed) = model_params(model, cfg)?;
    let defaults = SweepConfig::default();
    let sc = SweepConfig {
        regimes,
        grid_step: pick(grid.grid_step, cfg, "grid-step")?.unwrap_or(defaults.grid_step),
        reps: pick(grid.reps, cfg, "reps")?.unwrap_or(defaults.reps),
        periods,
        base_seed,
        market,
        regime_params,
        workers: pick(grid.workers, cfg, "workers")?.unwrap_or(0),
        ..defaults
    };
    sc.validate()?;
    Ok(sc)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Output { path: p.display().to_string(), source: e }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Output { path: "stdout".into(), source: e }),
    }
}

fn cmd_run(args: RunArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let (market, regime_params, periods, seed) = model_params(&args.model, cfg)?;
    let m_s = pick(args.m_s, cfg, "m-s")?.unwrap_or(0.5);
    let m_d = pick(args.m_d, cfg, "m-d")?.unwrap_or(0.5);
    let rc = RunConfig {
        regime: pick(args.regime, cfg, "regime")?.unwrap_or(RegimeKind::Hrt),
        market: market.with_confidence(m_s, m_d),
        regime_params,
        periods,
        seed,
        ..RunConfig::default()
    };
    let run = run_series(&rc)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_fail = |e: csv::Error| CliError::Usage(format!("csv: {e}"));
    w.write_record(["t", "price", "F", "S", "branch", "frac_S", "frac_D", "overlap_ratio", "auctioneer", "jumpstart", "floored"])
        .map_err(csv_fail)?;
    for r in &run.records {
        w.write_record([
            r.t.to_string(),
            r.price.to_string(),
            r.flow.to_string(),
            r.level.to_string(),
            r.branch.to_string(),
            r.frac_s.to_string(),
            r.frac_d.to_string(),
            r.overlap_ratio.to_string(),
            u8::from(r.auctioneer_used()).to_string(),
            u8::from(r.jumpstarted).to_string(),
            u8::from(r.floored).to_string(),
        ])
        .map_err(csv_fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    let out = pick(args.output, cfg, "output")?;
    write_output(out.as_deref(), &String::from_utf8_lossy(&bytes))?;
    if let Some(step) = run.diverged_at {
        eprintln!("series diverged at step {step}; {} finite records written", run.records.len());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let regimes = regimes_or(args.regime, cfg, &RegimeKind::ALL)?;
    let mut sc = sweep_config(regimes, &args.grid, &args.model, cfg)?;
    sc.keep_series = args.keep_series || cfg.get::<bool>("keep-series")?.unwrap_or(false);
    let dir = pick(args.output, cfg, "output")?.unwrap_or_else(|| PathBuf::from("out"));
    eprintln!(
        "sweeping {} regime(s), {} cells x {} reps x {} periods into {}",
        sc.regimes.len(),
        sc.cell_count()?,
        sc.reps,
        sc.periods,
        dir.display()
    );
    match sweep::run_to_dir(&sc, &dir, RunOptions::default())? {
        SweepOutcome::Complete(res) => {
            let t = res.manifest.timing;
            eprintln!(
                "done in {:.1}s: {:.3e} steps/s on {} worker(s); full-resolution projection {:.0}s per regime",
                t.wall_seconds, t.steps_per_second, t.workers, t.full_scale_seconds_per_regime
            );
        }
        SweepOutcome::Interrupted { done } => eprintln!("interrupted: {done:?}"),
    }
    Ok(())
}

fn cmd_asweep(args: ASweepArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let regimes = regimes_or(args.regime, cfg, &[RegimeKind::Hrt, RegimeKind::Fva, RegimeKind::TraS])?;
    let sc = sweep_config(regimes, &args.grid, &args.model, cfg)?;
    let a_values = match args.a_values {
        Some(list) => parse_floats(&list, "a")?,
        None => sweep::default_a_values(),
    };
    let cell = match (pick(args.m_s, cfg, "m-s")?, pick(args.m_d, cfg, "m-d")?) {
        (Some(s), Some(d)) => Some((s, d)),
        (None, None) => None,
        _ => return Err(CliError::Usage("--m-s and --m-d must be given together".into())),
    };
    let rows = sweep::a_sweep(&sc, &a_values, cell)?;
    match pick(args.output, cfg, "output")? {
        Some(path) => sweep::write_a_sweep_csv(&path, &rows)?,
        None => {
            let mut text = String::from("a,regime,mean_price,median_price\n");
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for r in &rows {
                text.push_str(&format!("{},{},{},{}\n", r.a, r.regime.slug(), f(r.mean_price), f(r.median_price)));
            }
            write_output(None, &text)?;
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let regimes = match args.regime.or_else(|| cfg.raw("regime").map(String::from)) {
        Some(list) => parse_regimes(&list)?,
        None => {
            let found = report::available_regimes(&args.input);
            if found.is_empty() {
                return Err(CliError::Core(exsim_core::Error::MissingRegime {
                    regime: "any".into(),
                    path: args.input.clone(),
                    available: "none".into(),
                }));
            }
            found
        }
    };
    let tables: Vec<TableId> = if args.table.eq_ignore_ascii_case("all") {
        TableId::ALL.to_vec()
    } else {
        vec![args.table.parse()?]
    };
    let csv = match args.format.as_str() {
        "text" => false,
        "csv" => true,
        other => return Err(CliError::Usage(format!("unknown format `{other}` (text, csv)"))),
    };
    let mut out = String::new();
    for (k, table) in tables.iter().enumerate() {
        let rows = report::build_table(&args.input, *table, &regimes)?;
        if csv {
            let body = report::render_csv(&rows)?;
            // one header for the whole document
            out.push_str(if k == 0 { &body } else { body.split_once('\n').map_or("", |(_, rest)| rest) });
        } else {
            if k > 0 {
                out.push('\n');
            }
            out.push_str(&report::render_text(*table, &rows));
        }
    }
    let path = pick(args.output, cfg, "output")?;
    write_output(path.as_deref(), &out)
}

fn cmd_plot(args: PlotArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let regime = pick(args.regime, cfg, "regime")?.ok_or_else(|| CliError::Usage("--regime is required".into()))?;
    let metric = pick(args.metric, cfg, "metric")?.ok_or_else(|| CliError::Usage("--metric is required".into()))?;
    let out = pick(args.output, cfg, "output")?
        .unwrap_or_else(|| args.input.join(format!("{}_{}.svg", regime.slug(), metric)));
    report::plot_to_file(&args.input, regime, &metric, args.median, args.scale, &out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Run(a) => cmd_run(a, &cfg),
        Command::Sweep(a) => cmd_sweep(a, &cfg),
        Command::Asweep(a) => cmd_asweep(a, &cfg),
        Command::Report(a) => cmd_report(a, &cfg),
        Command::Plot(a) => cmd_plot(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
