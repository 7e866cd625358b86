//! Numerical kernels: quantiles, moments, correlation, the F distribution
//! and the Brown–Forsythe test.

use crate::error::{Error, Result};

/// Type-7 quantile of sorted data: linear interpolation at `h = (n-1)q`.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Empty("quantile of empty data"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi || sorted[lo] == sorted[hi] {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Sorts a copy of `data` (total order) and returns the quantile.
pub fn quantile_unsorted(data: &[f64], q: f64) -> Result<f64> {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, q)
}

pub fn median(data: &[f64]) -> Result<f64> {
    quantile_unsorted(data, 0.5)
}

fn max_abs(data: &[f64]) -> f64 {
    data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Arithmetic mean, computed on rescaled data so sums of very large
/// values do not overflow.
pub fn mean(data: &[f64]) -> Option<f64> {
    if data.is_empty() {
        return None;
    }
    let scale = max_abs(data);
    if scale == 0.0 {
        return Some(0.0);
    }
    if !scale.is_finite() {
        return None;
    }
    let m = data.iter().map(|x| x / scale).sum::<f64>() / data.len() as f64;
    Some(m * scale)
}

/// Mean and sample standard deviation (`n - 1` denominator).
pub fn mean_std(data: &[f64]) -> Option<(f64, f64)> {
    if data.len() < 2 {
        return None;
    }
    let scale = max_abs(data);
    if !scale.is_finite() {
        return None;
    }
    if scale == 0.0 {
        return Some((0.0, 0.0));
    }
    let n = data.len() as f64;
    let m = data.iter().map(|x| x / scale).sum::<f64>() / n;
    let ss = data.iter().map(|x| (x / scale - m).powi(2)).sum::<f64>();
    Some((m * scale, (ss / (n - 1.0)).sqrt() * scale))
}

/// Pearson correlation. `None` for fewer than three points, mismatched
/// lengths or zero variance on either side.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return None;
    }
    let (sx, sy) = (max_abs(x), max_abs(y));
    if !(sx.is_finite() && sy.is_finite()) || sx == 0.0 || sy == 0.0 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().map(|v| v / sx).sum::<f64>() / n;
    let my = y.iter().map(|v| v / sy).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a / sx - mx;
        let dy = b / sy - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of `x_t` with `y_{t-lag}` over the aligned overlap.
pub fn lagged_correlation(x: &[f64], y: &[f64], lag: usize) -> Option<f64> {
    if x.len() != y.len() || lag >= x.len() {
        return None;
    }
    pearson(&x[lag..], &y[..y.len() - lag])
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(format!("beta_inc requires a, b > 0 (got {a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("beta_inc requires x in [0, 1], got {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // the continued fraction converges fast for x < (a+1)/(a+b+2)
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x) / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, 1.0 - x) / b)
    }
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: u32, d2: u32) -> Result<f64> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidArgument(format!("F distribution needs positive degrees of freedom (got {d1}, {d2})")));
    }
    if x.is_nan() {
        return Err(Error::InvalidArgument("F distribution evaluated at NaN".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let (d1, d2) = (d1 as f64, d2 as f64);
    let z = d1 * x / (d1 * x + d2);
    beta_inc(d1 / 2.0, d2 / 2.0, z).map(|p| p.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownForsythe {
    pub statistic: f64,
    pub p_value: f64,
    /// Variance homogeneity is not rejected at the requested level.
    pub pass: bool,
}

/// Splits `series` into `k` contiguous blocks whose sizes differ by at
/// most one (earlier blocks take the remainder).
pub fn contiguous_blocks(series: &[f64], k: usize) -> Result<Vec<&[f64]>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 blocks, got {k}")));
    }
    if series.len() < 2 * k {
        return Err(Error::InvalidArgument(format!(
            "series of length {} cannot form {k} blocks of at least 2",
            series.len()
        )));
    }
    let base = series.len() / k;
    let extra = series.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let len = base + usize::from(j < extra);
        out.push(&series[start..start + len]);
        start += len;
    }
    Ok(out)
}

/// Brown–Forsythe test: one-way ANOVA on absolute deviations from each
/// group's median.
pub fn brown_forsythe_groups(groups: &[&[f64]], alpha: f64) -> Result<BrownForsythe> {
    let k = groups.len();
    if k < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::InvalidArgument("Brown-Forsythe needs at least 2 groups of at least 2".into()));
    }
    let devs: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let med = median(g).expect("non-empty group");
            g.iter().map(|y| (y - med).abs()).collect()
        })
        .collect();
    let n_total: usize = devs.iter().map(Vec::len).sum();
    let means: Vec<f64> = devs.iter().map(|z| z.iter().sum::<f64>() / z.len() as f64).collect();
    let grand = devs.iter().flatten().sum::<f64>() / n_total as f64;
    let between: f64 = devs.iter().zip(&means).map(|(z, m)| z.len() as f64 * (m - grand).powi(2)).sum();
    let within: f64 = devs.iter().zip(&means).map(|(z, m)| z.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sum();

    let df1 = (k - 1) as u32;
    let df2 = (n_total - k) as u32;
    let scale = grand.abs().max(f64::MIN_POSITIVE);
    let statistic = if within <= 1e-24 * scale * scale * n_total as f64 {
        if between <= 1e-24 * scale * scale * n_total as f64 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (between / df1 as f64) / (within / df2 as f64)
    };
    if statistic.is_nan() {
        return Err(Error::InvalidArgument("Brown-Forsythe on non-finite data".into()));
    }
    let cdf = f_cdf(statistic, df1, df2)?;
    Ok(BrownForsythe { statistic, p_value: 1.0 - cdf, pass: cdf < 1.0 - alpha })
}

/// Brown–Forsythe over `k` contiguous blocks of `series`.
pub fn brown_forsythe(series: &[f64], k: usize, alpha: f64) -> Result<BrownForsythe> {
    let blocks = contiguous_blocks(series, k)?;
    brown_forsythe_groups(&blocks, alpha)
}
