//! Grid sweeps over market confidence `(m_S, m_D)`, with replications,
//! checkpointing and on-disk artifacts.
//!
//! Cell `(i, j)` of an `n`-step grid sits at `m_S = i/n`, `m_D = j/n`.
//! Cells run in parallel; the replications of a cell run in replication
//! order, so every aggregate is a pure function of the cell indices and
//! the configuration.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::MarketParams;
use crate::error::{Error, Result};
use crate::metrics::{self, CellAggregate, GridSummary, Metric, MetricStat, MetricsConfig};
use crate::regimes::{RegimeKind, RegimeParams};
use crate::rng::DEFAULT_BASE_SEED;
use crate::simulation::{self, RunConfig, SeriesResult};

/// Version of the `cells_<regime>.csv` column layout.
pub const CELLS_SCHEMA_VERSION: u32 = 1;

/// Cells, replications and periods of a full-resolution sweep, used for
/// the runtime projection in the manifest.
pub const FULL_SCALE_STEPS: f64 = 101.0 * 101.0 * 1000.0 * 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub regimes: Vec<RegimeKind>,
    pub grid_step: f64,
    pub reps: u32,
    pub periods: usize,
    pub p0: f64,
    pub base_seed: u64,
    /// `m_S` and `m_D` are overridden per cell.
    pub market: MarketParams,
    pub regime_params: RegimeParams,
    pub metrics: MetricsConfig,
    /// Worker threads; 0 picks the rayon default.
    #[serde(skip)]
    pub workers: usize,
    /// Run the replications of a cell in parallel too.
    #[serde(skip)]
    pub parallel_reps: bool,
    #[serde(skip)]
    pub keep_series: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            regimes: RegimeKind::ALL.to_vec(),
            grid_step: 0.01,
            reps: 1000,
            periods: 500,
            p0: 1000.0,
            base_seed: DEFAULT_BASE_SEED,
            market: MarketParams::default(),
            regime_params: RegimeParams::default(),
            metrics: MetricsConfig::default(),
            workers: 0,
            parallel_reps: false,
            keep_series: false,
        }
    }
}

impl SweepConfig {
    /// Steps per axis; the grid has `(n + 1)²` cells.
    pub fn divisions(&self) -> Result<u32> {
        let step = self.grid_step;
        if !(step.is_finite() && step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidConfig(format!("grid step must lie in (0, 1], got {step}")));
        }
        let n = (1.0 / step).round();
        if ((n * step) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("grid step {step} does not divide 1")));
        }
        if n > 4095.0 {
            return Err(Error::InvalidConfig(format!("grid step {step} is too fine")));
        }
        Ok(n as u32)
    }

    pub fn cell_count(&self) -> Result<usize> {
        let n = self.divisions()? as usize + 1;
        Ok(n * n)
    }

    pub fn validate(&self) -> Result<()> {
        self.divisions()?;
        if self.regimes.is_empty() {
            return Err(Error::InvalidConfig("no regime selected".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be >= 1".into()));
        }
        if self.metrics.bf_blocks < 2 || self.periods <= 2 * self.metrics.bf_blocks {
            return Err(Error::InvalidConfig(format!(
                "periods ({}) must cover at least two observations per variance block ({} blocks)",
                self.periods, self.metrics.bf_blocks
            )));
        }
        self.run_template(RegimeKind::Hca, 0.0, 0.0).validate()
    }

    pub fn run_template(&self, regime: RegimeKind, m_s: f64, m_d: f64) -> RunConfig {
        RunConfig {
            regime,
            market: self.market.with_confidence(m_s, m_d),
            regime_params: self.regime_params,
            periods: self.periods,
            p0: self.p0,
            seed: 0,
        }
    }

    /// Hex SHA-256 of everything that determines the results of `regime`.
    pub fn hash_for(&self, regime: RegimeKind) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            regime: RegimeKind,
            grid_step: f64,
            reps: u32,
            periods: usize,
            p0: f64,
            base_seed: u64,
            market: &'a MarketParams,
            regime_params: &'a RegimeParams,
            metrics: &'a MetricsConfig,
            schema: u32,
        }
        let keyed = Keyed {
            regime,
            grid_step: self.grid_step,
            reps: self.reps,
            periods: self.periods,
            p0: self.p0,
            base_seed: self.base_seed,
            market: &self.market,
            regime_params: &self.regime_params,
            metrics: &self.metrics,
            schema: CELLS_SCHEMA_VERSION,
        };
        let bytes = serde_json::to_vec(&keyed).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Hash over all regimes of the sweep.
    pub fn hash(&self) -> String {
        let joined: Vec<String> = self.regimes.iter().map(|&r| self.hash_for(r)).collect();
        hex::encode(Sha256::digest(joined.join(",").as_bytes()))
    }
}

/// Coordinates of every cell, row-major in `i_ms`.
pub fn cell_indices(n: u32) -> Vec<(u32, u32)> {
    (0..=n).flat_map(|i| (0..=n).map(move |j| (i, j))).collect()
}

pub fn coordinate(i: u32, n: u32) -> f64 {
    i as f64 / n as f64
}

/// Simulates one cell. Returns the aggregate and, if requested, the raw
/// series in replication order.
pub fn run_cell(
    cfg: &SweepConfig,
    regime: RegimeKind,
    i_ms: u32,
    i_md: u32,
    keep_series: bool,
) -> Result<(CellAggregate, Vec<SeriesResult>)> {
    let n = cfg.divisions()?;
    let (m_s, m_d) = (coordinate(i_ms, n), coordinate(i_md, n));
    let template = cfg.run_template(regime, m_s, m_d);
    let seeds = simulation::replication_seeds(cfg.base_seed, i_ms, i_md, cfg.reps);
    let one = |seed: u64| -> Result<(metrics::SeriesMetrics, Option<SeriesResult>)> {
        let run = simulation::run_series(&RunConfig { seed, ..template })?;
        let m = metrics::series_metrics(&run, &cfg.metrics);
        Ok((m, keep_series.then_some(run)))
    };
    let results: Vec<_> = if cfg.parallel_reps {
        seeds.into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        seeds.into_iter().map(one).collect::<Result<_>>()?
    };
    let (per_rep, series): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let agg = metrics::aggregate_cell(i_ms, i_md, m_s, m_d, &per_rep)?;
    Ok((agg, series.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeGrid {
    pub regime: RegimeKind,
    pub divisions: u32,
    /// Sorted by `(i_ms, i_md)`.
    pub cells: Vec<CellAggregate>,
    pub summary: GridSummary,
}

impl RegimeGrid {
    pub fn cell(&self, i_ms: u32, i_md: u32) -> Option<&CellAggregate> {
        let side = self.divisions as usize + 1;
        self.cells.get(i_ms as usize * side + i_md as usize).filter(|c| c.i_ms == i_ms && c.i_md == i_md)
    }

    /// Per-cell values of `metric` (mean or median across replications)
    /// as a row-major `(m_S, m_D)` matrix.
    pub fn matrix(&self, metric: Metric, median: bool) -> Vec<Vec<Option<f64>>> {
        let side = self.divisions as usize + 1;
        self.cells
            .chunks(side)
            .map(|row| row.iter().map(|c| if median { c.median(metric) } else { c.mean(metric) }).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub steps: f64,
    pub steps_per_second: f64,
    pub workers: usize,
    /// Projected wall time of a 101×101 grid with 1000 replications of
    /// 500 periods, per regime, at the measured rate.
    pub full_scale_seconds_per_regime: f64,
}

impl Timing {
    fn measure(steps: f64, wall_seconds: f64, workers: usize) -> Self {
        let rate = if wall_seconds > 0.0 { steps / wall_seconds } else { f64::INFINITY };
        Timing {
            wall_seconds,
            steps,
            steps_per_second: rate,
            workers,
            full_scale_seconds_per_regime: FULL_SCALE_STEPS / rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub cells_schema: u32,
    pub config_hash: String,
    pub regime_hashes: BTreeMap<String, String>,
    pub base_seed: u64,
    pub cells_per_regime: usize,
    pub config: SweepConfig,
    /// Excluded when comparing runs for reproducibility.
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grids: Vec<RegimeGrid>,
    pub manifest: Manifest,
}

impl SweepResult {
    pub fn grid(&self, regime: RegimeKind) -> Option<&RegimeGrid> {
        self.grids.iter().find(|g| g.regime == regime)
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))
}

fn manifest(cfg: &SweepConfig, timing: Timing) -> Result<Manifest> {
    Ok(Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        cells_schema: CELLS_SCHEMA_VERSION,
        config_hash: cfg.hash(),
        regime_hashes: cfg.regimes.iter().map(|&r| (r.slug().to_string(), cfg.hash_for(r))).collect(),
        base_seed: cfg.base_seed,
        cells_per_regime: cfg.cell_count()?,
        config: cfg.clone(),
        timing,
    })
}

/// Runs the sweep in memory.
pub fn run_grid(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let n = cfg.divisions()?;
    let pool = build_pool(cfg.workers)?;
    let start = Instant::now();
    let mut grids = Vec::with_capacity(cfg.regimes.len());
    for &regime in &cfg.regimes {
        let cells: Vec<CellAggregate> = pool.install(|| {
            cell_indices(n)
                .into_par_iter()
                .map(|(i, j)| run_cell(cfg, regime, i, j, false).map(|(agg, _)| agg))
                .collect::<Result<_>>()
        })?;
        let summary = metrics::summarize_grid(&cells)?;
        grids.push(RegimeGrid { regime, divisions: n, cells, summary });
    }
    let steps = (cfg.cell_count()? * cfg.regimes.len()) as f64 * cfg.reps as f64 * cfg.periods as f64;
    let timing = Timing::measure(steps, start.elapsed().as_secs_f64(), pool.current_num_threads());
    Ok(SweepResult { grids, manifest: manifest(cfg, timing)? })
}

/// Controls for [`run_to_dir`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop after this many newly simulated cells (per regime), leaving
    /// the checkpoint in place.
    pub cell_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepOutcome {
    Complete(SweepResult),
    /// Stopped early by `cell_limit`; cells done per regime.
    Interrupted { done: Vec<(RegimeKind, usize)> },
}

pub fn checkpoint_path(dir: &Path, regime: RegimeKind) -> PathBuf {
    dir.join(format!("checkpoint_{}.jsonl", regime.slug()))
}

pub fn cells_path(dir: &Path, regime: RegimeKind) -> PathBuf {
    dir.join(format!("cells_{}.csv", regime.slug()))
}

pub fn summary_path(dir: &Path, regime: RegimeKind) -> PathBuf {
    dir.join(format!("summary_{}.json", regime.slug()))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config_hash: String,
    regime: RegimeKind,
}

/// Loads finished cells from a checkpoint. A missing or empty file yields
/// no cells; a header from another configuration is refused.
fn load_checkpoint(path: &Path, expected: &str) -> Result<BTreeMap<(u32, u32), CellAggregate>> {
    let mut done = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        None => return Ok(done),
        Some(line) => line.map_err(|e| Error::io(path, e))?,
    };
    if header.trim().is_empty() {
        return Ok(done);
    }
    let header: CheckpointHeader = serde_json::from_str(&header)
        .map_err(|e| Error::Malformed { path: path.into(), reason: format!("checkpoint header: {e}") })?;
    if header.config_hash != expected {
        return Err(Error::CheckpointMismatch { path: path.into(), expected: expected.into(), found: header.config_hash });
    }
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        // A torn last line from a killed process is dropped and recomputed.
        if let Ok(cell) = serde_json::from_str::<CellAggregate>(&line) {
            done.insert((cell.i_ms, cell.i_md), cell);
        }
    }
    Ok(done)
}

fn open_checkpoint(path: &Path, hash: &str, regime: RegimeKind, fresh: bool) -> Result<File> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(!fresh)
        .write(true)
        .truncate(fresh)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        let header = serde_json::to_string(&CheckpointHeader { config_hash: hash.into(), regime })?;
        writeln!(file, "{header}").map_err(|e| Error::io(path, e))?;
    }
    Ok(file)
}

/// Runs the sweep and writes `cells_<regime>.csv`, `summary_<regime>.json`
/// and `manifest.json` under `dir`, resuming from any compatible
/// checkpoint.
pub fn run_to_dir(cfg: &SweepConfig, dir: &Path, opts: RunOptions) -> Result<SweepOutcome> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = cfg.divisions()?;
    let pool = build_pool(cfg.workers)?;
    let start = Instant::now();
    let mut simulated = 0usize;
    let mut grids = Vec::new();
    let mut progress = Vec::new();
    let mut interrupted = false;

    for &regime in &cfg.regimes {
        let hash = cfg.hash_for(regime);
        let cp_path = checkpoint_path(dir, regime);
        let mut done = load_checkpoint(&cp_path, &hash)?;
        let file = open_checkpoint(&cp_path, &hash, regime, done.is_empty())?;
        let sink = Mutex::new(BufWriter::new(file));

        let mut pending: Vec<(u32, u32)> = cell_indices(n).into_iter().filter(|c| !done.contains_key(c)).collect();
        if let Some(limit) = opts.cell_limit {
            if pending.len() > limit {
                pending.truncate(limit);
                interrupted = true;
            }
        }
        let series_dir = dir.join(format!("series_{}", regime.slug()));
        if cfg.keep_series {
            fs::create_dir_all(&series_dir).map_err(|e| Error::io(&series_dir, e))?;
        }

        let fresh: Vec<CellAggregate> = pool.install(|| {
            pending
                .par_iter()
                .map(|&(i, j)| {
                    let (agg, series) = run_cell(cfg, regime, i, j, cfg.keep_series)?;
                    if cfg.keep_series {
                        write_series_csv(&series_dir.join(format!("cell_{i:04}_{j:04}.csv")), &series)?;
                    }
                    let line = serde_json::to_string(&agg)?;
                    let mut w = sink.lock().expect("checkpoint writer poisoned");
                    writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|e| Error::io(&cp_path, e))?;
                    Ok(agg)
                })
                .collect::<Result<_>>()
        })?;
        simulated += fresh.len();
        for cell in fresh {
            done.insert((cell.i_ms, cell.i_md), cell);
        }
        progress.push((regime, done.len()));
        drop(sink);
        if interrupted {
            continue;
        }

        let cells: Vec<CellAggregate> = done.into_values().collect();
        let summary = metrics::summarize_grid(&cells)?;
        write_cells_csv(&cells_path(dir, regime), &cells)?;
        write_json(&summary_path(dir, regime), &summary)?;
        fs::remove_file(&cp_path).map_err(|e| Error::io(&cp_path, e))?;
        grids.push(RegimeGrid { regime, divisions: n, cells, summary });
    }

    if interrupted {
        return Ok(SweepOutcome::Interrupted { done: progress });
    }
    let steps = simulated as f64 * cfg.reps as f64 * cfg.periods as f64;
    let timing = Timing::measure(steps, start.elapsed().as_secs_f64(), pool.current_num_threads());
    let manifest = manifest(cfg, timing)?;
    write_json(&manifest_path(dir), &manifest)?;
    Ok(SweepOutcome::Complete(SweepResult { grids, manifest }))
}

/// One row of the noise-amplitude sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ASweepRow {
    pub a: f64,
    pub regime: RegimeKind,
    pub mean_price: Option<f64>,
    pub median_price: Option<f64>,
}

/// Default noise amplitudes: 0 to 0.5 in steps of 0.05.
pub fn default_a_values() -> Vec<f64> {
    (0..=10).map(|k| k as f64 * 0.05).collect()
}

/// For each `a` and regime, the mean of per-replication mean prices and
/// the median of per-replication median prices, either at one grid cell
/// or across the whole grid (mean of cell means, median of cell medians).
pub fn a_sweep(cfg: &SweepConfig, a_values: &[f64], cell: Option<(f64, f64)>) -> Result<Vec<ASweepRow>> {
    cfg.validate()?;
    if let Some(bad) = a_values.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidConfig(format!("noise amplitude must be >= 0, got {bad}")));
    }
    let n = cfg.divisions()?;
    let at = match cell {
        Some((m_s, m_d)) => Some((grid_index(m_s, n)?, grid_index(m_d, n)?)),
        None => None,
    };
    let pool = build_pool(cfg.workers)?;
    let mut rows = Vec::with_capacity(a_values.len() * cfg.regimes.len());
    for &a in a_values {
        let cfg_a = SweepConfig { regime_params: RegimeParams { a, ..cfg.regime_params }, ..cfg.clone() };
        for &regime in &cfg.regimes {
            let (mean_price, median_price) = match at {
                Some((i, j)) => {
                    let agg = pool.install(|| run_cell(&SweepConfig { parallel_reps: true, ..cfg_a.clone() }, regime, i, j, false))?.0;
                    (agg.mean(Metric::PriceMean), agg.median(Metric::PriceMedian))
                }
                None => {
                    let g = run_grid(&SweepConfig { regimes: vec![regime], ..cfg_a.clone() })?;
                    let s = &g.grids[0].summary;
                    (s.row("price_mean", "mean").map(|x| x.mean), s.row("price_median", "median").map(|x| x.median))
                }
            };
            rows.push(ASweepRow { a, regime, mean_price, median_price });
        }
    }
    Ok(rows)
}

/// Index of confidence value `m` on an `n`-step grid.
pub fn grid_index(m: f64, n: u32) -> Result<u32> {
    let i = (m * n as f64).round();
    if !(0.0..=1.0).contains(&m) || (i / n as f64 - m).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("confidence {m} is not on the {n}-step grid")));
    }
    Ok(i as u32)
}

pub fn write_a_sweep_csv(path: &Path, rows: &[ASweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["a", "regime", "mean_price", "median_price"]).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([r.a.to_string(), r.regime.slug().to_string(), fmt_opt(r.mean_price), fmt_opt(r.median_price)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed { path: path.into(), reason: e.to_string() })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed { path: path.into(), reason: format!("{other:?}") },
    }
}

/// Header of the cells CSV: cell coordinates, then `<metric>_mean`,
/// `<metric>_median` and `<metric>_n` for every metric, then `vol_q3`
/// and `w_v`. Undefined values are empty fields.
pub fn cells_header() -> Vec<String> {
    let mut h: Vec<String> = ["i_ms", "i_md", "m_s", "m_d", "reps", "diverged"].map(String::from).to_vec();
    for m in Metric::ALL {
        h.push(format!("{}_mean", m.name()));
        h.push(format!("{}_median", m.name()));
        h.push(format!("{}_n", m.name()));
    }
    h.push("vol_q3".into());
    h.push("w_v".into());
    h
}

pub fn write_cells_csv(path: &Path, cells: &[CellAggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(cells_header()).map_err(|e| csv_err(path, e))?;
    for c in cells {
        let mut row = vec![
            c.i_ms.to_string(),
            c.i_md.to_string(),
            c.m_s.to_string(),
            c.m_d.to_string(),
            c.reps.to_string(),
            c.diverged.to_string(),
        ];
        for s in &c.stats {
            row.push(fmt_opt(s.mean));
            row.push(fmt_opt(s.median));
            row.push(s.n.to_string());
        }
        row.push(fmt_opt(c.vol_q3));
        row.push(fmt_opt(c.w_v));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a cells CSV written by [`write_cells_csv`], by column name.
pub fn read_cells_csv(path: &Path) -> Result<Vec<CellAggregate>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Malformed { path: path.into(), reason: format!("missing column `{name}`") })
    };
    let base = ["i_ms", "i_md", "m_s", "m_d", "reps", "diverged"].map(col);
    let base: Vec<usize> = base.into_iter().collect::<Result<_>>()?;
    let metric_cols: Vec<[usize; 3]> = Metric::ALL
        .iter()
        .map(|m| Ok([col(&format!("{}_mean", m.name()))?, col(&format!("{}_median", m.name()))?, col(&format!("{}_n", m.name()))?]))
        .collect::<Result<_>>()?;
    let (vq3, wv) = (col("vol_q3")?, col("w_v")?);

    let bad = |reason: String| Error::Malformed { path: path.into(), reason };
    let mut cells = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let opt = |i: usize| -> Result<Option<f64>> {
            let s = field(i);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| bad(format!("row {}: bad number `{s}`", line + 1)))
        };
        let int = |i: usize| -> Result<u32> {
            field(i).parse().map_err(|_| bad(format!("row {}: bad integer `{}`", line + 1, field(i))))
        };
        let stats = metric_cols
            .iter()
            .map(|&[m, md, n]| Ok(MetricStat { mean: opt(m)?, median: opt(md)?, n: int(n)? }))
            .collect::<Result<_>>()?;
        cells.push(CellAggregate {
            i_ms: int(base[0])?,
            i_md: int(base[1])?,
            m_s: opt(base[2])?.ok_or_else(|| bad("empty m_s".into()))?,
            m_d: opt(base[3])?.ok_or_else(|| bad("empty m_d".into()))?,
            reps: int(base[4])?,
            diverged: int(base[5])?,
            stats,
            vol_q3: opt(vq3)?,
            w_v: opt(wv)?,
        });
    }
    Ok(cells)
}

/// Writes the raw series of one cell, one block of rows per replication.
pub fn write_series_csv(path: &Path, series: &[SeriesResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["rep", "seed", "t", "price", "F", "S", "branch", "frac_S", "frac_D", "overlap_ratio", "jumpstart", "floored"])
        .map_err(|e| csv_err(path, e))?;
    for (rep, run) in series.iter().enumerate() {
        for r in &run.records {
            w.write_record([
                rep.to_string(),
                run.seed.to_string(),
                r.t.to_string(),
                r.price.to_string(),
                r.flow.to_string(),
                r.level.to_string(),
                r.branch.to_string(),
                r.frac_s.to_string(),
                r.frac_d.to_string(),
                r.overlap_ratio.to_string(),
                u8::from(r.jumpstarted).to_string(),
                u8::from(r.floored).to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig { regimes: vec![RegimeKind::Hrt], grid_step: 0.5, reps: 3, periods: 60, ..Default::default() }
    }

    #[test]
    fn grid_arithmetic() {
        let cfg = SweepConfig::default();
        assert_eq!(cfg.divisions().unwrap(), 100);
        assert_eq!(cfg.cell_count().unwrap(), 10201);
        let desk = SweepConfig { grid_step: 0.05, ..Default::default() };
        assert_eq!(desk.cell_count().unwrap(), 441);
        assert!(SweepConfig { grid_step: 0.3, ..Default::default() }.divisions().is_err());
        assert!(SweepConfig { grid_step: 0.0, ..Default::default() }.divisions().is_err());
        assert!(SweepConfig { reps: 0, ..Default::default() }.validate().is_err());
        assert_eq!(cell_indices(2).len(), 9);
        assert_eq!(coordinate(3, 20), 0.15);
    }

    #[test]
    fn hash_tracks_results_only() {
        let a = small();
        let b = SweepConfig { workers: 7, keep_series: true, ..small() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), SweepConfig { reps: 4, ..small() }.hash());
        assert_ne!(a.hash_for(RegimeKind::Hrt), a.hash_for(RegimeKind::Hca));
    }

    #[test]
    fn cell_is_standalone() {
        let cfg = small();
        let grid = run_grid(&cfg).unwrap();
        let g = grid.grid(RegimeKind::Hrt).unwrap();
        assert_eq!(g.cells.len(), 9);
        let (alone, _) = run_cell(&cfg, RegimeKind::Hrt, 1, 2, false).unwrap();
        assert_eq!(g.cell(1, 2), Some(&alone));
        let par = SweepConfig { parallel_reps: true, ..small() };
        assert_eq!(run_cell(&par, RegimeKind::Hrt, 1, 2, false).unwrap().0, alone);
    }

    #[test]
    fn a_sweep_rows() {
        let cfg = SweepConfig { regimes: vec![RegimeKind::Hca, RegimeKind::Fva], ..small() };
        let rows = a_sweep(&cfg, &[0.0, 0.1, 0.2], Some((0.5, 0.5))).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[1].a, rows[1].regime), (0.0, RegimeKind::Fva));
        assert!(a_sweep(&cfg, &[-0.1], None).is_err());
        assert!(a_sweep(&cfg, &[0.1], Some((0.3, 0.5))).is_err());
        assert_eq!(grid_index(0.7, 20).unwrap(), 14);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = run_grid(&small()).unwrap();
        let cells = &g.grids[0].cells;
        let path = dir.path().join("c.csv");
        write_cells_csv(&path, cells).unwrap();
        assert_eq!(&read_cells_csv(&path).unwrap(), cells);
    }
}
