//! Summary tables and heatmaps rendered from sweep outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{CellAggregate, GridSummary, Metric, SevenNumber};
use crate::regimes::RegimeKind;
use crate::sweep::{self, cells_path, summary_path};

/// Tables of the report, each with two summary rows per regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    Prices,
    Volatility,
    Width,
    Exuberance,
    Dissociation,
    Liquidity,
    Corr,
    CorrLag,
}

impl TableId {
    pub const ALL: [TableId; 8] = [
        TableId::Prices,
        TableId::Volatility,
        TableId::Width,
        TableId::Exuberance,
        TableId::Dissociation,
        TableId::Liquidity,
        TableId::Corr,
        TableId::CorrLag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableId::Prices => "prices",
            TableId::Volatility => "volatility",
            TableId::Width => "width",
            TableId::Exuberance => "exuberance",
            TableId::Dissociation => "dissociation",
            TableId::Liquidity => "liquidity",
            TableId::Corr => "corr",
            TableId::CorrLag => "corr-lag",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TableId::Prices => "Market prices: per-cell mean and median price",
            TableId::Volatility => "Volatility: mean coefficient of variation and its 75% peak",
            TableId::Width => "Volatility width (Q3 - Q1) / Q2 and median coefficient of variation",
            TableId::Exuberance => "Exuberance: Q3 of d_t and mean exuberance",
            TableId::Dissociation => "Vagary: share of time dissociated and mean episode length",
            TableId::Liquidity => "Liquidity: clearing ratio",
            TableId::Corr => "Correlation of p_t with S_t",
            TableId::CorrLag => "Correlation of p_t with S_(t-1)",
        }
    }

    /// `(row label, metric, statistic)` pairs, in display order.
    pub fn rows(self) -> [(&'static str, &'static str, &'static str); 2] {
        match self {
            TableId::Prices => [("mean", "price_mean", "mean"), ("median", "price_median", "median")],
            TableId::Volatility => [("mean", "cv", "mean"), ("75% peak", "cv", "vol_q3")],
            TableId::Width => [("W_v", "cv", "w_v"), ("median", "cv", "median")],
            TableId::Exuberance => [("Q3[d_t]", "q3_dt", "mean"), ("exub", "exub_range", "mean")],
            TableId::Dissociation => [("share", "dissoc_pct", "mean"), ("periods", "dissoc_len", "mean")],
            TableId::Liquidity => [("mean", "liquidity", "mean"), ("median", "liquidity", "median")],
            TableId::Corr => [("mean", "corr_cross", "mean"), ("median", "corr_cross", "median")],
            TableId::CorrLag => [("mean", "corr_lag", "mean"), ("median", "corr_lag", "median")],
        }
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        TableId::ALL.into_iter().find(|t| t.name() == key).ok_or_else(|| {
            let names: Vec<&str> = TableId::ALL.iter().map(|t| t.name()).collect();
            Error::InvalidArgument(format!("unknown table `{s}`; available: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub regime: RegimeKind,
    pub label: &'static str,
    pub metric: &'static str,
    pub statistic: &'static str,
    pub summary: Option<SevenNumber>,
}

/// Regimes with a summary file in `dir`, in canonical order.
pub fn available_regimes(dir: &Path) -> Vec<RegimeKind> {
    RegimeKind::ALL.into_iter().filter(|&r| summary_path(dir, r).is_file()).collect()
}

fn missing(dir: &Path, regime: RegimeKind, path: &Path) -> Error {
    let avail: Vec<&str> = available_regimes(dir).iter().map(|r| r.slug()).collect();
    Error::MissingRegime {
        regime: regime.slug().into(),
        path: path.into(),
        available: if avail.is_empty() { "none".into() } else { avail.join(", ") },
    }
}

pub fn load_summary(dir: &Path, regime: RegimeKind) -> Result<GridSummary> {
    let path = summary_path(dir, regime);
    if !path.is_file() {
        return Err(missing(dir, regime, &path));
    }
    sweep::read_json(&path)
}

pub fn load_cells(dir: &Path, regime: RegimeKind) -> Result<Vec<CellAggregate>> {
    let path = cells_path(dir, regime);
    if !path.is_file() {
        return Err(missing(dir, regime, &path));
    }
    sweep::read_cells_csv(&path)
}

pub fn table_rows(table: TableId, summaries: &[(RegimeKind, GridSummary)]) -> Vec<TableRow> {
    let mut out = Vec::with_capacity(2 * summaries.len());
    for (regime, summary) in summaries {
        for (label, metric, statistic) in table.rows() {
            out.push(TableRow { regime: *regime, label, metric, statistic, summary: summary.row(metric, statistic).copied() });
        }
    }
    out
}

/// Loads the summaries of `regimes` from `dir` and builds the table.
pub fn build_table(dir: &Path, table: TableId, regimes: &[RegimeKind]) -> Result<Vec<TableRow>> {
    let summaries = regimes.iter().map(|&r| Ok((r, load_summary(dir, r)?))).collect::<Result<Vec<_>>>()?;
    Ok(table_rows(table, &summaries))
}

/// Compact fixed-width rendering of one number.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

const COLUMNS: [&str; 7] = ["mean", "std", "min", "q1", "median", "q3", "max"];

fn seven(s: &SevenNumber) -> [f64; 7] {
    [s.mean, s.std, s.min, s.q1, s.median, s.q3, s.max]
}

pub fn render_text(table: TableId, rows: &[TableRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", table.title());
    let _ = write!(out, "{:<8} {:<10}", "regime", "row");
    for c in COLUMNS {
        let _ = write!(out, " {c:>12}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<8} {:<10}", r.regime.label(), r.label);
        match &r.summary {
            Some(s) => {
                for v in seven(s) {
                    let _ = write!(out, " {:>12}", format_value(v));
                }
            }
            None => {
                for _ in COLUMNS {
                    let _ = write!(out, " {:>12}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_csv(rows: &[TableRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["regime", "row", "metric", "statistic", "count", "excluded"];
    header.extend(COLUMNS);
    let wrap = |e: csv::Error| Error::InvalidArgument(format!("table rendering: {e}"));
    w.write_record(&header).map_err(wrap)?;
    for r in rows {
        let mut rec = vec![r.regime.slug().to_string(), r.label.into(), r.metric.into(), r.statistic.into()];
        match &r.summary {
            Some(s) => {
                rec.push(s.count.to_string());
                rec.push(s.excluded.to_string());
                rec.extend(seven(s).iter().map(|v| v.to_string()));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 2 + COLUMNS.len())),
        }
        w.write_record(&rec).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("table rendering: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorScale {
    Linear,
    Log10,
}

impl FromStr for ColorScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(ColorScale::Linear),
            "log10" | "log" => Ok(ColorScale::Log10),
            _ => Err(Error::InvalidArgument(format!("unknown color scale `{s}` (linear, log10)"))),
        }
    }
}

/// Log coloring for price levels under the mark-to-market regime, whose
/// cell means span dozens of orders of magnitude.
pub fn default_scale(regime: RegimeKind, metric: Metric) -> ColorScale {
    let price = matches!(metric, Metric::PriceMean | Metric::PriceMedian | Metric::PriceStd);
    if regime == RegimeKind::Fva && price {
        ColorScale::Log10
    } else {
        ColorScale::Linear
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSpec {
    pub title: String,
    /// `values[i_ms][i_md]`; `None` or non-finite cells use the diverged
    /// color.
    pub values: Vec<Vec<Option<f64>>>,
    pub scale: ColorScale,
}

pub const DIVERGED_COLOR: &str = "#d9d9d9";

/// Matrix of one metric from cell aggregates. `median` selects the
/// across-replication median instead of the mean.
pub fn cell_matrix(cells: &[CellAggregate], metric: Metric, median: bool) -> Result<Vec<Vec<Option<f64>>>> {
    let side = (cells.len() as f64).sqrt().round() as usize;
    if side == 0 || side * side != cells.len() {
        return Err(Error::InvalidArgument(format!("{} cells do not form a square grid", cells.len())));
    }
    let mut m = vec![vec![None; side]; side];
    for c in cells {
        let (i, j) = (c.i_ms as usize, c.i_md as usize);
        if i >= side || j >= side {
            return Err(Error::InvalidArgument(format!("cell ({i}, {j}) outside a {side}x{side} grid")));
        }
        m[i][j] = if median { c.median(metric) } else { c.mean(metric) };
    }
    Ok(m)
}

// Viridis stops.
const PALETTE: [(u8, u8, u8); 5] = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)];

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let k = (t.floor() as usize).min(PALETTE.len() - 2);
    let f = t - k as f64;
    let (a, b) = (PALETTE[k], PALETTE[k + 1]);
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders a square heatmap: `m_D` on the horizontal axis, `m_S` upward.
pub fn render_svg(spec: &HeatmapSpec) -> Result<String> {
    let side = spec.values.len();
    if side == 0 || spec.values.iter().any(|r| r.len() != side) {
        return Err(Error::InvalidArgument("heatmap matrix must be square and non-empty".into()));
    }
    let transform = |v: f64| match spec.scale {
        ColorScale::Linear => Some(v).filter(|v| v.is_finite()),
        ColorScale::Log10 => Some(v).filter(|v| v.is_finite() && *v > 0.0).map(f64::log10),
    };
    let shown: Vec<f64> = spec.values.iter().flatten().filter_map(|v| v.and_then(transform)).collect();
    let (lo, hi) = shown.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));

    let cell = (420.0 / side as f64).clamp(4.0, 24.0);
    let plot = cell * side as f64;
    let (left, top) = (60.0, 40.0);
    let width = left + plot + 130.0;
    let height = top + plot + 50.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(&spec.title));
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(&spec.title));
    let _ = writeln!(s, r#"<g id="cells">"#);
    for (i, row) in spec.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let fill = match v.and_then(transform) {
                Some(x) if hi > lo => color((x - lo) / (hi - lo)),
                Some(_) => color(0.5),
                None => DIVERGED_COLOR.into(),
            };
            let x = left + j as f64 * cell;
            let y = top + (side - 1 - i) as f64 * cell;
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"/>"#);
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">m_D</text>"#, left + plot / 2.0, top + plot + 35.0);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">m_S</text>"#,
        top + plot / 2.0,
        top + plot / 2.0
    );
    let _ = writeln!(s, r#"<text x="{left}" y="{}" text-anchor="start">0</text>"#, top + plot + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1</text>"#, left + plot, top + plot + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, left - 5.0, top + plot);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1</text>"#, left - 5.0, top + 10.0);

    // legend: vertical gradient with min and max labels
    let lx = left + plot + 20.0;
    let steps = 20;
    let lh = plot / steps as f64;
    let _ = writeln!(s, r#"<g id="legend">"#);
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{}" width="14" height="{lh}" fill="{}"/>"#, top + k as f64 * lh, color(t));
    }
    let suffix = if spec.scale == ColorScale::Log10 { " (log10)" } else { "" };
    let (max_label, min_label) = if shown.is_empty() {
        ("n/a".to_string(), "n/a".to_string())
    } else {
        (format_value(hi), format_value(lo))
    };
    let _ = writeln!(s, r#"<text x="{}" y="{}">max {}{}</text>"#, lx + 18.0, top + 10.0, max_label, suffix);
    let _ = writeln!(s, r#"<text x="{}" y="{}">min {}{}</text>"#, lx + 18.0, top + plot, min_label, suffix);
    let _ = writeln!(s, r#"<rect x="{lx}" y="{}" width="14" height="10" fill="{DIVERGED_COLOR}"/>"#, top + plot + 20.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}">diverged</text>"#, lx + 18.0, top + plot + 29.0);
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

/// Reads `cells_<regime>.csv` from `dir` and writes the heatmap of `metric`.
pub fn plot_to_file(
    dir: &Path,
    regime: RegimeKind,
    metric_name: &str,
    median: bool,
    scale: Option<ColorScale>,
    out: &Path,
) -> Result<()> {
    let metric = Metric::from_name(metric_name).ok_or_else(|| Error::UnknownMetric {
        name: metric_name.into(),
        available: Metric::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "),
    })?;
    let cells = load_cells(dir, regime)?;
    let spec = HeatmapSpec {
        title: format!("{} {} ({} across replications)", regime.label(), metric.name(), if median { "median" } else { "mean" }),
        values: cell_matrix(&cells, metric, median)?,
        scale: scale.unwrap_or_else(|| default_scale(regime, metric)),
    };
    fs::write(out, render_svg(&spec)?).map_err(|e| Error::io(out, e))
}
