//! Per-series indicators, their per-cell aggregation across replications
//! and the seven-number summaries across the confidence grid.

use serde::{Deserialize, Serialize};

use crate::engine::Branch;
use crate::error::{Error, Result};
use crate::simulation::{SeriesResult, StepRecord};
use crate::stats::{self, BrownForsythe};

/// Minimum run length, in periods, for a dissociation episode.
pub const MIN_EPISODE: usize = 10;

/// Series handed to the Brown–Forsythe test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BfSeries {
    /// First differences `p_t - p_{t-1}`.
    Changes,
    Levels,
}

impl std::str::FromStr for BfSeries {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "changes" | "diff" => Ok(BfSeries::Changes),
            "levels" | "prices" => Ok(BfSeries::Levels),
            _ => Err(Error::InvalidArgument(format!("unknown Brown-Forsythe series `{s}` (changes, levels)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub bf_blocks: usize,
    pub bf_alpha: f64,
    pub bf_series: BfSeries,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { bf_blocks: 10, bf_alpha: 0.05, bf_series: BfSeries::Changes }
    }
}

/// Coefficient of variation `σ/μ` (sample standard deviation).
pub fn volatility_cv(prices: &[f64]) -> Option<f64> {
    let (m, s) = stats::mean_std(prices)?;
    if m == 0.0 || !m.is_finite() {
        return None;
    }
    Some((s / m).abs())
}

/// `log10(μ/σ)`, the log form of the volatility indicator.
pub fn volatility_log10(prices: &[f64]) -> Option<f64> {
    let (m, s) = stats::mean_std(prices)?;
    if s == 0.0 || m <= 0.0 {
        return None;
    }
    Some((m / s).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exuberance {
    /// Third quartile of `d_t`.
    pub q3_dt: f64,
    /// `(max d_t - min d_t) / T`.
    pub range: f64,
}

/// `d_t = (p_t - S_{t-1}) / S_{t-1}`; `lagged_levels[t]` holds `S_{t-1}`.
pub fn exuberance(prices: &[f64], lagged_levels: &[f64]) -> Result<Exuberance> {
    if prices.is_empty() {
        return Err(Error::Empty("exuberance of empty series"));
    }
    if prices.len() != lagged_levels.len() {
        return Err(Error::InvalidArgument("exuberance: series lengths differ".into()));
    }
    let mut d: Vec<f64> = prices.iter().zip(lagged_levels).map(|(p, s)| (p - s) / s).collect();
    d.sort_by(f64::total_cmp);
    let q3_dt = stats::quantile(&d, 0.75)?;
    let range = (d[d.len() - 1] - d[0]) / d.len() as f64;
    Ok(Exuberance { q3_dt, range })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissociation {
    /// Share of periods spent inside episodes.
    pub pct: f64,
    /// Mean episode length, zero without episodes.
    pub mean_len: f64,
    pub episodes: usize,
}

/// Lengths of maximal runs of `true` that last at least `min_len`.
pub fn episode_lengths(flags: impl IntoIterator<Item = bool>, min_len: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run = 0;
    for f in flags {
        if f {
            run += 1;
        } else {
            if run >= min_len {
                out.push(run);
            }
            run = 0;
        }
    }
    if run >= min_len {
        out.push(run);
    }
    out
}

/// Episodes where `D_t = p_t - S_t` lies more than two standard
/// deviations from its series mean for at least [`MIN_EPISODE`] periods.
pub fn dissociation(prices: &[f64], levels: &[f64]) -> Result<Dissociation> {
    if prices.len() != levels.len() {
        return Err(Error::InvalidArgument("dissociation: series lengths differ".into()));
    }
    let gap: Vec<f64> = prices.iter().zip(levels).map(|(p, s)| p - s).collect();
    let none = Dissociation { pct: 0.0, mean_len: 0.0, episodes: 0 };
    let Some((mu, sigma)) = stats::mean_std(&gap) else {
        return Ok(none);
    };
    if !(sigma > 0.0) {
        return Ok(none);
    }
    let runs = episode_lengths(gap.iter().map(|d| (d - mu).abs() > 2.0 * sigma), MIN_EPISODE);
    if runs.is_empty() {
        return Ok(none);
    }
    let inside: usize = runs.iter().sum();
    Ok(Dissociation {
        pct: inside as f64 / gap.len() as f64,
        mean_len: inside as f64 / runs.len() as f64,
        episodes: runs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Liquidity {
    /// Mean of overlap-over-union of the two bid intervals: the clearing
    /// area relative to the market area.
    pub clearing_ratio: f64,
    /// Mean of `(frac_S + frac_D) / 2`, zero on fallback steps.
    pub matched_ratio: f64,
    /// Mean matched supply fraction.
    pub satisfied_supply: f64,
}

pub fn liquidity(records: &[StepRecord]) -> Result<Liquidity> {
    if records.is_empty() {
        return Err(Error::Empty("liquidity of empty run"));
    }
    let n = records.len() as f64;
    let (mut overlap, mut matched, mut supply) = (0.0, 0.0, 0.0);
    for r in records {
        overlap += r.overlap_ratio;
        if r.branch == Branch::Interior {
            matched += 0.5 * (r.frac_s + r.frac_d);
            supply += r.frac_s;
        }
    }
    Ok(Liquidity { clearing_ratio: overlap / n, matched_ratio: matched / n, satisfied_supply: supply / n })
}

/// Every per-series indicator, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PriceMean,
    PriceMedian,
    PriceStd,
    Cv,
    CvLog10,
    CvBlockQ3,
    Q3Dt,
    ExubRange,
    DissocPct,
    DissocLen,
    Liquidity,
    MatchRatio,
    SatisfiedSupply,
    CorrCross,
    CorrLag,
    BfStat,
    BfPass,
    AuctioneerPct,
    JumpstartPct,
    FloorEvents,
}

impl Metric {
    pub const ALL: [Metric; 20] = [
        Metric::PriceMean,
        Metric::PriceMedian,
        Metric::PriceStd,
        Metric::Cv,
        Metric::CvLog10,
        Metric::CvBlockQ3,
        Metric::Q3Dt,
        Metric::ExubRange,
        Metric::DissocPct,
        Metric::DissocLen,
        Metric::Liquidity,
        Metric::MatchRatio,
        Metric::SatisfiedSupply,
        Metric::CorrCross,
        Metric::CorrLag,
        Metric::BfStat,
        Metric::BfPass,
        Metric::AuctioneerPct,
        Metric::JumpstartPct,
        Metric::FloorEvents,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::PriceMean => "price_mean",
            Metric::PriceMedian => "price_median",
            Metric::PriceStd => "price_std",
            Metric::Cv => "cv",
            Metric::CvLog10 => "cv_log10",
            Metric::CvBlockQ3 => "cv_block_q3",
            Metric::Q3Dt => "q3_dt",
            Metric::ExubRange => "exub_range",
            Metric::DissocPct => "dissoc_pct",
            Metric::DissocLen => "dissoc_len",
            Metric::Liquidity => "liquidity",
            Metric::MatchRatio => "match_ratio",
            Metric::SatisfiedSupply => "satisfied_supply",
            Metric::CorrCross => "corr_cross",
            Metric::CorrLag => "corr_lag",
            Metric::BfStat => "bf_stat",
            Metric::BfPass => "bf_pass",
            Metric::AuctioneerPct => "auctioneer_pct",
            Metric::JumpstartPct => "jumpstart_pct",
            Metric::FloorEvents => "floor_events",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Indicators of one series. `None` marks an undefined value (zero
/// variance, too short a series); those are excluded from aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetrics {
    pub values: [Option<f64>; 20],
    pub periods: usize,
    pub diverged: bool,
}

impl SeriesMetrics {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.values[m.index()]
    }
}

fn block_cv_q3(prices: &[f64], k: usize) -> Option<f64> {
    let blocks = stats::contiguous_blocks(prices, k).ok()?;
    let cvs: Vec<f64> = blocks.iter().filter_map(|b| volatility_cv(b)).collect();
    if cvs.is_empty() {
        return None;
    }
    stats::quantile_unsorted(&cvs, 0.75).ok()
}

/// Computes every indicator of a run on its finite prefix.
pub fn series_metrics(run: &SeriesResult, cfg: &MetricsConfig) -> SeriesMetrics {
    let mut values = [None; 20];
    let records = &run.records;
    let n = records.len();
    let diverged = run.diverged_at.is_some();
    let mut set = |m: Metric, v: Option<f64>| values[m.index()] = v.filter(|x| !x.is_nan());
    if n == 0 {
        return SeriesMetrics { values, periods: 0, diverged };
    }
    let prices = run.prices();
    let levels = run.levels();
    let mut lagged = Vec::with_capacity(n);
    lagged.push(run.p0);
    lagged.extend_from_slice(&levels[..n - 1]);

    set(Metric::PriceMean, stats::mean(&prices));
    set(Metric::PriceMedian, stats::median(&prices).ok());
    let moments = stats::mean_std(&prices);
    set(Metric::PriceStd, moments.map(|(_, s)| s));
    set(Metric::Cv, volatility_cv(&prices));
    set(Metric::CvLog10, volatility_log10(&prices));
    set(Metric::CvBlockQ3, block_cv_q3(&prices, cfg.bf_blocks));

    if let Ok(ex) = exuberance(&prices, &lagged) {
        set(Metric::Q3Dt, Some(ex.q3_dt));
        set(Metric::ExubRange, Some(ex.range));
    }
    if let Ok(dis) = dissociation(&prices, &levels) {
        set(Metric::DissocPct, Some(dis.pct));
        // averaged over the replications that have episodes
        set(Metric::DissocLen, (dis.episodes > 0).then_some(dis.mean_len));
    }
    if let Ok(liq) = liquidity(records) {
        set(Metric::Liquidity, Some(liq.clearing_ratio));
        set(Metric::MatchRatio, Some(liq.matched_ratio));
        set(Metric::SatisfiedSupply, Some(liq.satisfied_supply));
    }
    set(Metric::CorrCross, stats::pearson(&prices, &levels));
    set(Metric::CorrLag, stats::pearson(&prices, &lagged));

    let bf_input = match cfg.bf_series {
        BfSeries::Changes => prices.windows(2).map(|w| w[1] - w[0]).collect(),
        BfSeries::Levels => prices.clone(),
    };
    if let Ok(BrownForsythe { statistic, pass, .. }) = stats::brown_forsythe(&bf_input, cfg.bf_blocks, cfg.bf_alpha) {
        set(Metric::BfStat, Some(statistic).filter(|s| s.is_finite()));
        set(Metric::BfPass, Some(if pass { 1.0 } else { 0.0 }));
    }
    set(Metric::AuctioneerPct, Some(run.auctioneer_count() as f64 / n as f64));
    set(Metric::JumpstartPct, Some(run.jumpstart_count() as f64 / n as f64));
    set(Metric::FloorEvents, Some(run.floor_count() as f64));

    SeriesMetrics { values, periods: n, diverged }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Replications with a defined value.
    pub n: u32,
}

impl MetricStat {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MetricStat { mean: None, median: None, n: 0 };
        }
        MetricStat {
            mean: stats::mean(values).filter(|v| v.is_finite()),
            median: stats::median(values).ok(),
            n: values.len() as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub i_ms: u32,
    pub i_md: u32,
    pub m_s: f64,
    pub m_d: f64,
    pub reps: u32,
    pub diverged: u32,
    /// Indexed by [`Metric::index`].
    pub stats: Vec<MetricStat>,
    /// Third quartile of the coefficient of variation across replications.
    pub vol_q3: Option<f64>,
    /// `(Q3 - Q1) / Q2` of the coefficient of variation across replications.
    pub w_v: Option<f64>,
}

impl CellAggregate {
    pub fn stat(&self, m: Metric) -> &MetricStat {
        &self.stats[m.index()]
    }

    pub fn mean(&self, m: Metric) -> Option<f64> {
        self.stat(m).mean
    }

    pub fn median(&self, m: Metric) -> Option<f64> {
        self.stat(m).median
    }
}

/// Reduces the replications of one cell, consumed in the given order.
pub fn aggregate_cell(i_ms: u32, i_md: u32, m_s: f64, m_d: f64, results: &[SeriesMetrics]) -> Result<CellAggregate> {
    if results.is_empty() {
        return Err(Error::Empty("cell without replications"));
    }
    let stats: Vec<MetricStat> = Metric::ALL
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = results.iter().filter_map(|r| r.get(m)).collect();
            MetricStat::of(&vals)
        })
        .collect();
    let mut cvs: Vec<f64> = results.iter().filter_map(|r| r.get(Metric::Cv)).collect();
    cvs.sort_by(f64::total_cmp);
    let (vol_q3, w_v) = if cvs.is_empty() {
        (None, None)
    } else {
        let q1 = stats::quantile(&cvs, 0.25)?;
        let q2 = stats::quantile(&cvs, 0.5)?;
        let q3 = stats::quantile(&cvs, 0.75)?;
        (Some(q3), if q2 > 0.0 { Some((q3 - q1) / q2) } else { None })
    };
    Ok(CellAggregate {
        i_ms,
        i_md,
        m_s,
        m_d,
        reps: results.len() as u32,
        diverged: results.iter().filter(|r| r.diverged).count() as u32,
        stats,
        vol_q3,
        w_v,
    })
}

/// Mean, standard deviation and five-number summary of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SevenNumber {
    pub count: u32,
    pub excluded: u32,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl SevenNumber {
    /// Summarizes the defined entries; `None` when there are none.
    pub fn of(values: &[Option<f64>]) -> Option<SevenNumber> {
        let mut v: Vec<f64> = values.iter().flatten().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p| stats::quantile(&v, p).expect("non-empty");
        let (mean, std) = match stats::mean_std(&v) {
            Some(ms) => ms,
            None => (v[0], 0.0),
        };
        Some(SevenNumber {
            count: v.len() as u32,
            excluded: (values.len() - v.len()) as u32,
            mean,
            std,
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

/// One summary row: a cell-level statistic of one metric across cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    /// `mean` or `median` across replications, or a cell-level quantity
    /// such as `vol_q3`.
    pub statistic: String,
    pub summary: Option<SevenNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub cells: u32,
    pub rows: Vec<SummaryRow>,
}

impl GridSummary {
    pub fn row(&self, metric: &str, statistic: &str) -> Option<&SevenNumber> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.statistic == statistic)
            .and_then(|r| r.summary.as_ref())
    }
}

pub fn summarize_grid(cells: &[CellAggregate]) -> Result<GridSummary> {
    if cells.is_empty() {
        return Err(Error::Empty("grid without cells"));
    }
    let mut rows = Vec::with_capacity(2 * Metric::ALL.len() + 2);
    for m in Metric::ALL {
        let means: Vec<Option<f64>> = cells.iter().map(|c| c.mean(m)).collect();
        let medians: Vec<Option<f64>> = cells.iter().map(|c| c.median(m)).collect();
        rows.push(SummaryRow { metric: m.name().into(), statistic: "mean".into(), summary: SevenNumber::of(&means) });
        rows.push(SummaryRow { metric: m.name().into(), statistic: "median".into(), summary: SevenNumber::of(&medians) });
    }
    let vol_q3: Vec<Option<f64>> = cells.iter().map(|c| c.vol_q3).collect();
    let w_v: Vec<Option<f64>> = cells.iter().map(|c| c.w_v).collect();
    rows.push(SummaryRow { metric: "cv".into(), statistic: "vol_q3".into(), summary: SevenNumber::of(&vol_q3) });
    rows.push(SummaryRow { metric: "cv".into(), statistic: "w_v".into(), summary: SevenNumber::of(&w_v) });
    Ok(GridSummary { cells: cells.len() as u32, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn interior(frac: f64) -> StepRecord {
        StepRecord {
            t: 1,
            price: 1000.0,
            flow: 0.0,
            level: 1000.0,
            branch: Branch::Interior,
            frac_s: frac,
            frac_d: frac,
            overlap_ratio: 0.6,
            jumpstarted: false,
            floored: false,
        }
    }

    #[test]
    fn cv_examples() {
        assert_eq!(volatility_cv(&[5.0; 10]), Some(0.0));
        let p = [998.0, 1000.0, 1003.0, 999.0];
        let scaled: Vec<f64> = p.iter().map(|x| x * 7.5).collect();
        assert_relative_eq!(volatility_cv(&p).unwrap(), volatility_cv(&scaled).unwrap(), max_relative = 1e-12);
        assert_eq!(volatility_cv(&[-1.0, 1.0]), None);
        // HRT table values: sigma / mu
        assert_relative_eq!(3.6688 / 1000.25, 0.003668, epsilon = 5e-7);
        assert_relative_eq!(1.7446 / 1000.16, 0.001744, epsilon = 5e-7);
    }

    #[test]
    fn exuberance_examples() {
        let s = [1000.0, 1001.0, 999.5];
        let ex = exuberance(&s, &s).unwrap();
        assert_eq!((ex.q3_dt, ex.range), (0.0, 0.0));

        let levels = vec![1000.0; 500];
        let prices: Vec<f64> = (0..500).map(|i| 1000.0 * (1.0 - 0.01 + 0.02 * i as f64 / 499.0)).collect();
        let ex = exuberance(&prices, &levels).unwrap();
        assert_relative_eq!(ex.range, 4e-5, epsilon = 1e-15);
    }

    #[test]
    fn dissociation_examples() {
        let flat = vec![3.0; 50];
        assert_eq!(dissociation(&flat, &[0.0; 50]).unwrap().pct, 0.0);

        let mut prices = vec![0.0; 500];
        for (i, p) in prices.iter_mut().enumerate() {
            *p = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        for p in &mut prices[100..112] {
            *p = 8.0;
        }
        let d = dissociation(&prices, &[0.0; 500]).unwrap();
        assert_relative_eq!(d.pct, 0.024);
        assert_relative_eq!(d.mean_len, 12.0);
        assert_eq!(d.episodes, 1);

        for p in &mut prices[100..112] {
            *p = 1.0;
        }
        for p in &mut prices[200..209] {
            *p = 8.0;
        }
        let d = dissociation(&prices, &[0.0; 500]).unwrap();
        assert_eq!((d.pct, d.mean_len), (0.0, 0.0));
    }

    #[test]
    fn liquidity_examples() {
        let recs = vec![interior(0.75); 20];
        let l = liquidity(&recs).unwrap();
        assert_relative_eq!(l.matched_ratio, 0.75);
        assert_relative_eq!(l.clearing_ratio, 0.6);
        assert_relative_eq!(l.satisfied_supply, 0.75);

        let fb = StepRecord { branch: Branch::Fallback, frac_s: 0.0, frac_d: 0.0, overlap_ratio: 0.0, ..interior(0.0) };
        let l = liquidity(&vec![fb; 5]).unwrap();
        assert_eq!((l.matched_ratio, l.clearing_ratio), (0.0, 0.0));
    }

    fn metrics_with(cv: f64, price: f64) -> SeriesMetrics {
        let mut values = [None; 20];
        values[Metric::Cv.index()] = Some(cv);
        values[Metric::PriceMean.index()] = Some(price);
        SeriesMetrics { values, periods: 500, diverged: false }
    }

    #[test]
    fn cell_aggregation() {
        let one = aggregate_cell(0, 0, 0.0, 0.0, &[metrics_with(0.2, 1001.0)]).unwrap();
        assert_eq!(one.mean(Metric::PriceMean), Some(1001.0));
        assert_eq!(one.median(Metric::PriceMean), Some(1001.0));
        assert_eq!(one.stat(Metric::CorrCross).n, 0);

        let three: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&c| metrics_with(c, 1000.0)).collect();
        let cell = aggregate_cell(0, 0, 0.0, 0.0, &three).unwrap();
        assert_relative_eq!(cell.w_v.unwrap(), 0.5);
        assert_relative_eq!(cell.vol_q3.unwrap(), 2.5);
        assert!(aggregate_cell(0, 0, 0.0, 0.0, &[]).is_err());
    }

    #[test]
    fn grid_summary_of_identical_cells() {
        let cell = aggregate_cell(0, 0, 0.0, 0.0, &[metrics_with(0.3, 1000.5)]).unwrap();
        let g = summarize_grid(&vec![cell; 9]).unwrap();
        let row = g.row("price_mean", "mean").unwrap();
        assert_eq!(row.min, row.max);
        assert_eq!(row.count, 9);
        assert!(g.row("corr_cross", "mean").is_none());
        assert!(summarize_grid(&[]).is_err());
    }

    #[test]
    fn seven_number_order() {
        let v: Vec<Option<f64>> = vec![Some(3.0), None, Some(1.0), Some(2.0), Some(10.0)];
        let s = SevenNumber::of(&v).unwrap();
        assert_eq!(s.excluded, 1);
        assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        assert_eq!(s.median, 2.5);
    }
}
