//! Brute-force oracles for the statistics kernels, shared by the oracle
//! tests and the acceptance run.
#![allow(dead_code)]

use exsim_core::metrics::{dissociation, MIN_EPISODE};
use exsim_core::rng::RngStream;
use exsim_core::stats::{self, brown_forsythe, brown_forsythe_groups, f_cdf, pearson, quantile};

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn random_vec(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal() * 10.0 + rng.uniform(-5.0, 5.0).unwrap()).collect()
}

// Type-7 quantile written from the definition with explicit ranks.

// Type-7 quantile written from the definition with explicit ranks.
pub fn brute_quantile(data: &[f64], q: f64) -> f64 {
    let mut v = data.to_vec();
    // selection sort: deliberately unlike the library's sort call
    for i in 0..v.len() {
        let mut min = i;
        for j in i + 1..v.len() {
            if v[j] < v[min] {
                min = j;
            }
        }
        v.swap(i, min);
    }
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
    }
    let (mx, my) = (sx / n, sy / n);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

// One-way ANOVA on absolute deviations from group medians, with medians
// taken by brute-force quantile and sums accumulated term by term.
pub fn brute_bf_statistic(groups: &[Vec<f64>]) -> f64 {
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let med = brute_quantile(g, 0.5);
            g.iter().map(|v| (v - med).abs()).collect()
        })
        .collect();
    let k = z.len() as f64;
    let n: f64 = z.iter().map(|g| g.len() as f64).sum();
    let grand: f64 = z.iter().flatten().sum::<f64>() / n;
    let mut between = 0.0;
    let mut within = 0.0;
    for g in &z {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        between += g.len() as f64 * (m - grand).powi(2);
        for v in g {
            within += (v - m).powi(2);
        }
    }
    ((n - k) / (k - 1.0)) * between / within
}

// Composite Simpson on the F density after the substitution x = u², which
// removes the integrable singularity at zero for d1 = 1.
pub fn simpson_f_cdf(x: f64, d1: u32, d2: u32) -> f64 {
    let (a, b) = (d1 as f64 / 2.0, d2 as f64 / 2.0);
    let ln_beta = stats::ln_gamma(a) + stats::ln_gamma(b) - stats::ln_gamma(a + b);
    let r = d1 as f64 / d2 as f64;
    let dens = |t: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        (a * r.ln() + (a - 1.0) * t.ln() - (a + b) * (1.0 + r * t).ln() - ln_beta).exp()
    };
    let g = |u: f64| if u == 0.0 && d1 == 1 { 2.0 * (0.5 * r.ln() - ln_beta).exp() } else { dens(u * u) * 2.0 * u };
    let upper = x.sqrt();
    let n = 20_000;
    let h = upper / n as f64;
    let mut s = g(0.0) + g(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(i as f64 * h);
    }
    s * h / 3.0
}

pub fn brute_dissociation(prices: &[f64], levels: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = prices.iter().zip(levels).map(|(p, s)| p - s).collect();
    let n = d.len();
    let mu = d.iter().sum::<f64>() / n as f64;
    let sd = (d.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd == 0.0 {
        return (0.0, 0.0);
    }
    let out: Vec<bool> = d.iter().map(|v| (v - mu).abs() > 2.0 * sd).collect();
    // every maximal run, found by checking each (start, end) pair
    let mut runs = Vec::new();
    for s in 0..n {
        let mut all = true;
        for e in s..n {
            all &= out[e];
            let left_closed = s == 0 || !out[s - 1];
            let right_closed = e == n - 1 || !out[e + 1];
            if all && left_closed && right_closed && e - s + 1 >= MIN_EPISODE {
                runs.push(e - s + 1);
            }
        }
    }
    if runs.is_empty() {
        return (0.0, 0.0);
    }
    let inside: usize = runs.iter().sum();
    (inside as f64 / n as f64, inside as f64 / runs.len() as f64)
}

/// Largest relative error of the type-7 quantile over `instances` random
/// samples.
pub fn quantile_sweep(seed: u64, instances: usize) -> f64 {
    let mut rng = RngStream::from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 1 + (rng.next_u64() % 40) as usize;
        let data = random_vec(&mut rng, n);
        let q = rng.next_f64();
        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        let got = quantile(&sorted, q).unwrap();
        let want = brute_quantile(&data, q);
        if (got - want).abs() > 1e-12 {
            worst = worst.max(rel_err(got, want));
        }
    }
    worst
}

/// Largest error of the correlation, relative to `max(|r|, 1e-3)`.
pub fn pearson_sweep(seed: u64, instances: usize) -> f64 {
    let mut rng = RngStream::from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 3 + (rng.next_u64() % 40) as usize;
        let x = random_vec(&mut rng, n);
        let w = rng.uniform(-1.0, 1.0).unwrap();
        let y: Vec<f64> = x.iter().map(|v| w * v + rng.standard_normal() * 5.0).collect();
        let got = pearson(&x, &y).unwrap();
        let want = brute_pearson(&x, &y);
        worst = worst.max((got - want).abs() / want.abs().max(1e-3));
    }
    worst
}

/// Largest relative error of the Brown–Forsythe statistic on random
/// unequal groups.
pub fn brown_forsythe_sweep(seed: u64, instances: usize) -> f64 {
    let mut rng = RngStream::from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = 2 + (rng.next_u64() % 5) as usize;
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let n = 3 + (rng.next_u64() % 12) as usize;
                let scale = rng.uniform(0.5, 3.0).unwrap();
                (0..n).map(|_| rng.standard_normal() * scale).collect()
            })
            .collect();
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        let got = brown_forsythe_groups(&refs, 0.05).unwrap();
        worst = worst.max(rel_err(got.statistic, brute_bf_statistic(&groups)));
    }
    worst
}

/// Largest relative error of the F cdf against quadrature, over points
/// where the cdf is at least 1e-4.
pub fn f_cdf_sweep(seed: u64, instances: usize) -> f64 {
    let mut rng = RngStream::from_seed(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < instances {
        let d1 = 1 + (rng.next_u64() % 12) as u32;
        let d2 = 1 + (rng.next_u64() % 40) as u32;
        let x = rng.uniform(0.05, 6.0).unwrap();
        let want = simpson_f_cdf(x, d1, d2);
        if want < 1e-4 {
            continue;
        }
        worst = worst.max(rel_err(f_cdf(x, d1, d2).unwrap(), want));
        checked += 1;
    }
    worst
}

/// Scanner disagreements with the exhaustive run search, and the number
/// of instances that contained at least one episode.
pub fn dissociation_sweep(seed: u64, instances: usize) -> (usize, usize) {
    let mut rng = RngStream::from_seed(seed);
    let (mut mismatches, mut with_episodes) = (0, 0);
    for _ in 0..instances {
        let n = 40 + (rng.next_u64() % 110) as usize;
        let levels = vec![0.0; n];
        let mut prices: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        if rng.next_f64() < 0.7 {
            let len = 8 + (rng.next_u64() % 8) as usize;
            let start = (rng.next_u64() as usize) % (n - len);
            let shift = rng.uniform(5.0, 12.0).unwrap();
            for p in &mut prices[start..start + len] {
                *p += shift;
            }
        }
        let got = dissociation(&prices, &levels).unwrap();
        if (got.pct, got.mean_len) != brute_dissociation(&prices, &levels) {
            mismatches += 1;
        }
        with_episodes += usize::from(got.episodes > 0);
    }
    (mismatches, with_episodes)
}

/// Share of i.i.d. Gaussian series of length 500 that pass the test.
pub fn brown_forsythe_pass_rate(seed: u64, trials: usize) -> f64 {
    let mut rng = RngStream::from_seed(seed);
    let passed = (0..trials)
        .filter(|_| {
            let y: Vec<f64> = (0..500).map(|_| rng.standard_normal()).collect();
            brown_forsythe(&y, 10, 0.05).unwrap().pass
        })
        .count();
    passed as f64 / trials as f64
}
