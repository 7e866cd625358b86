//! Focal prices of the four extreme investors and the clearing rule.
//!
//! Investors on each side are spread uniformly between a chartist
//! (`i = 0`) and a fundamentalist (`i = 1`) extreme. The supply side holds
//! shares and sells at or above its focal price; the demand side buys at
//! or below its focal price.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Sign applied to the `β·δ` revision term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaSign {
    /// Overestimation lowers the next forecast.
    Minus,
    Plus,
}

impl DeltaSign {
    fn factor(self) -> f64 {
        match self {
            DeltaSign::Minus => -1.0,
            DeltaSign::Plus => 1.0,
        }
    }
}

impl FromStr for DeltaSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minus" | "-" => Ok(DeltaSign::Minus),
            "plus" | "+" => Ok(DeltaSign::Plus),
            other => Err(Error::InvalidArgument(format!("unknown delta-sign `{other}` (expected minus or plus)"))),
        }
    }
}

impl fmt::Display for DeltaSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeltaSign::Minus => "minus",
            DeltaSign::Plus => "plus",
        })
    }
}

/// Distribution of the auctioneer's fallback tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TickMode {
    /// `0.01 · U[0, 1)`.
    Uniform,
    /// `N(0, 1) / 100`.
    Gaussian,
}

impl FromStr for TickMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(TickMode::Uniform),
            "gaussian" => Ok(TickMode::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown tick-mode `{other}` (expected uniform or gaussian)"))),
        }
    }
}

impl fmt::Display for TickMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TickMode::Uniform => "uniform",
            TickMode::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Supply-side market confidence.
    pub m_s: f64,
    /// Demand-side market confidence.
    pub m_d: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta_sign: DeltaSign,
    pub tick_mode: TickMode,
    pub price_floor: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            m_s: 0.5,
            m_d: 0.5,
            beta: 0.5,
            gamma: 1.0,
            delta_sign: DeltaSign::Minus,
            tick_mode: TickMode::Uniform,
            price_floor: 0.01,
        }
    }
}

impl MarketParams {
    pub fn with_confidence(mut self, m_s: f64, m_d: f64) -> Self {
        self.m_s = m_s;
        self.m_d = m_d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("m_s", self.m_s), ("m_d", self.m_d)] {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {m}")));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.price_floor.is_finite() && self.price_floor > 0.0) {
            return Err(Error::InvalidConfig(format!("price floor must be positive, got {}", self.price_floor)));
        }
        Ok(())
    }
}

/// Index of an extreme investor within the four-element arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Investor {
    ChartistSupply = 0,
    FundamentalistSupply = 1,
    ChartistDemand = 2,
    FundamentalistDemand = 3,
}

/// Focal prices `[E(0,S), E(1,S), E(0,D), E(1,D)]`.
pub type Expectations = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    /// Last clearing price `p_t`.
    pub price: f64,
    /// Previous clearing price `p_{t-1}`.
    pub prev_price: f64,
    /// Forecast revisions `E(p_t) - p_t`, indexed like [`Expectations`].
    pub delta: [f64; 4],
}

impl MarketState {
    /// Flat history at `p0`, no revisions.
    pub fn initial(p0: f64) -> Self {
        Self { price: p0, prev_price: p0, delta: [0.0; 4] }
    }
}

pub fn focal_expectations(st: &MarketState, mp: &MarketParams, flow: f64) -> Expectations {
    let trend = st.price - st.prev_price;
    let s = mp.delta_sign.factor() * mp.beta;
    let fundamental = mp.gamma * flow;
    let supply = st.price + mp.m_s * trend;
    let demand = st.price + mp.m_d * trend;
    [
        supply + s * st.delta[0],
        supply + s * st.delta[1] + fundamental,
        demand + s * st.delta[2],
        demand + s * st.delta[3] + fundamental,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideBounds {
    pub lo_s: f64,
    pub hi_s: f64,
    pub lo_d: f64,
    pub hi_d: f64,
}

impl SideBounds {
    pub fn width_s(&self) -> f64 {
        self.hi_s - self.lo_s
    }

    pub fn width_d(&self) -> f64 {
        self.hi_d - self.lo_d
    }

    pub fn is_finite(&self) -> bool {
        self.lo_s.is_finite() && self.hi_s.is_finite() && self.lo_d.is_finite() && self.hi_d.is_finite()
    }

    /// Shared length of the two intervals over the length of their union.
    pub fn overlap_ratio(&self) -> f64 {
        let inter = (self.hi_s.min(self.hi_d) - self.lo_s.max(self.lo_d)).max(0.0);
        let union = self.width_s() + self.width_d() - inter;
        if union > 0.0 {
            (inter / union).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

pub fn side_bounds(e: &Expectations) -> SideBounds {
    SideBounds {
        lo_s: e[0].min(e[1]),
        hi_s: e[0].max(e[1]),
        lo_d: e[2].min(e[3]),
        hi_d: e[2].max(e[3]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Interior,
    Fallback,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Interior => "interior",
            Branch::Fallback => "fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingOutcome {
    pub price: f64,
    pub branch: Branch,
    /// Matched share of the supply interval.
    pub frac_s: f64,
    /// Matched share of the demand interval.
    pub frac_d: f64,
    pub overlap_ratio: f64,
    /// The price fell to zero or below and was raised to the floor.
    pub floored: bool,
}

/// The interior clearing price, or `None` when the fallback tick applies.
pub fn interior_price(b: &SideBounds) -> Option<f64> {
    let ws = b.width_s();
    let wd = b.width_d();
    let denom = ws + wd;
    if b.hi_s <= b.lo_d || denom <= 0.0 {
        return None;
    }
    Some((b.hi_s * wd + b.lo_d * ws) / denom)
}

/// Unclipped matched fractions `((p - lo_S)/w_S, (hi_D - p)/w_D)`.
///
/// Equal to each other at the interior price whenever both widths are
/// positive.
pub fn raw_fractions(b: &SideBounds, price: f64) -> (f64, f64) {
    ((price - b.lo_s) / b.width_s(), (b.hi_d - price) / b.width_d())
}

fn supply_fraction(b: &SideBounds, price: f64) -> f64 {
    let w = b.width_s();
    if w > 0.0 {
        ((price - b.lo_s) / w).clamp(0.0, 1.0)
    } else if price >= b.lo_s {
        1.0
    } else {
        0.0
    }
}

fn demand_fraction(b: &SideBounds, price: f64) -> f64 {
    let w = b.width_d();
    if w > 0.0 {
        ((b.hi_d - price) / w).clamp(0.0, 1.0)
    } else if price <= b.hi_d {
        1.0
    } else {
        0.0
    }
}

/// Draws the auctioneer tick. Consumed every period so that the stream
/// position never depends on which branch was taken.
pub fn draw_tick(rng: &mut RngStream, mode: TickMode) -> f64 {
    match mode {
        TickMode::Uniform => 0.01 * rng.next_f64(),
        TickMode::Gaussian => rng.standard_normal() / 100.0,
    }
}

/// Clears the market given a pre-drawn tick.
pub fn clear_with_tick(b: &SideBounds, price: f64, mp: &MarketParams, tick: f64) -> Result<ClearingOutcome> {
    if !b.is_finite() {
        return Err(Error::NonFiniteBounds { step: 0 });
    }
    let overlap_ratio = b.overlap_ratio();
    let (new_price, branch, frac_s, frac_d) = match interior_price(b) {
        Some(p) => (p, Branch::Interior, supply_fraction(b, p), demand_fraction(b, p)),
        None => (price + tick, Branch::Fallback, 0.0, 0.0),
    };
    let floored = !(new_price > 0.0);
    Ok(ClearingOutcome {
        price: if floored { mp.price_floor } else { new_price },
        branch,
        frac_s,
        frac_d,
        overlap_ratio,
        floored,
    })
}

/// Clears the market: interior price when the intervals admit one,
/// otherwise the previous price plus the auctioneer tick.
pub fn clear(b: &SideBounds, price: f64, mp: &MarketParams, rng: &mut RngStream) -> Result<ClearingOutcome> {
    let tick = draw_tick(rng, mp.tick_mode);
    clear_with_tick(b, price, mp, tick)
}

pub fn update_deltas(st: &MarketState, e: &Expectations, realized: f64) -> MarketState {
    MarketState {
        price: realized,
        prev_price: st.price,
        delta: [e[0] - realized, e[1] - realized, e[2] - realized, e[3] - realized],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bounds(s: (f64, f64), d: (f64, f64)) -> SideBounds {
        SideBounds { lo_s: s.0, hi_s: s.1, lo_d: d.0, hi_d: d.1 }
    }

    #[test]
    fn rest_point() {
        let st = MarketState::initial(1000.0);
        let e = focal_expectations(&st, &MarketParams::default(), 0.0);
        assert_eq!(e, [1000.0; 4]);
    }

    #[test]
    fn hand_evaluated_expectations() {
        // trend 10, m 0.5 -> +5; delta 2, beta 0.5, minus -> -1; F = 1
        let st = MarketState { price: 1000.0, prev_price: 990.0, delta: [2.0; 4] };
        let e = focal_expectations(&st, &MarketParams::default(), 1.0);
        assert_relative_eq!(e[Investor::ChartistSupply as usize], 1004.0);
        assert_relative_eq!(e[Investor::FundamentalistSupply as usize], 1005.0);
        assert_relative_eq!(e[Investor::ChartistDemand as usize], 1004.0);
        assert_relative_eq!(e[Investor::FundamentalistDemand as usize], 1005.0);

        let plus = MarketParams { delta_sign: DeltaSign::Plus, ..Default::default() };
        assert_relative_eq!(focal_expectations(&st, &plus, 1.0)[0], 1006.0);
    }

    #[test]
    fn fundamentalist_offset_is_gamma_flow() {
        let st = MarketState { price: 1012.0, prev_price: 1003.0, delta: [0.7, 0.7, -2.0, -2.0] };
        let mp = MarketParams { gamma: 0.8, ..Default::default() }.with_confidence(0.3, 0.9);
        let e = focal_expectations(&st, &mp, 2.5);
        assert_relative_eq!(e[1] - e[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(e[3] - e[2], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn side_bounds_basics() {
        let b = side_bounds(&[110.0, 100.0, 5.0, 5.0]);
        assert_eq!((b.lo_s, b.hi_s), (100.0, 110.0));
        assert_eq!((b.lo_d, b.hi_d), (5.0, 5.0));
        assert_eq!(side_bounds(&[100.0, 110.0, 5.0, 5.0]), b);
    }

    #[test]
    fn identical_intervals_clear_at_midpoint() {
        let b = bounds((900.0, 1100.0), (900.0, 1100.0));
        let out = clear_with_tick(&b, 1000.0, &MarketParams::default(), 0.005).unwrap();
        assert_eq!(out.branch, Branch::Interior);
        assert_relative_eq!(out.price, 1000.0);
        assert_relative_eq!(out.overlap_ratio, 1.0);
    }

    #[test]
    fn overlapping_intervals() {
        let b = bounds((90.0, 110.0), (100.0, 120.0));
        let out = clear_with_tick(&b, 100.0, &MarketParams::default(), 0.0).unwrap();
        assert_relative_eq!(out.price, 105.0);
        assert_relative_eq!(out.frac_s, 0.75);
        assert_relative_eq!(out.frac_d, 0.75);
        assert_relative_eq!(out.overlap_ratio, 10.0 / 30.0);
    }

    #[test]
    fn reversed_disjoint_intervals_post_without_matching() {
        let b = bounds((110.0, 120.0), (90.0, 100.0));
        let out = clear_with_tick(&b, 100.0, &MarketParams::default(), 0.0).unwrap();
        assert_eq!(out.branch, Branch::Interior);
        assert_relative_eq!(out.price, 105.0);
        assert_eq!(out.frac_s, 0.0);
        assert_eq!(out.frac_d, 0.0);
        assert_eq!(out.overlap_ratio, 0.0);
    }

    #[test]
    fn fallback_tick() {
        let b = bounds((90.0, 95.0), (100.0, 120.0));
        let mut rng = RngStream::from_seed(3);
        let out = clear(&b, 97.0, &MarketParams::default(), &mut rng).unwrap();
        assert_eq!(out.branch, Branch::Fallback);
        assert!(out.price >= 97.0 && out.price < 97.01);
        assert_eq!((out.frac_s, out.frac_d), (0.0, 0.0));

        // both widths zero
        let b = bounds((100.0, 100.0), (100.0, 100.0));
        let out = clear_with_tick(&b, 100.0, &MarketParams::default(), 0.004).unwrap();
        assert_eq!(out.branch, Branch::Fallback);
        assert_relative_eq!(out.price, 100.004);
    }

    #[test]
    fn zero_width_side_trades_fully() {
        let b = bounds((100.0, 100.0), (95.0, 110.0));
        let out = clear_with_tick(&b, 100.0, &MarketParams::default(), 0.0).unwrap();
        assert_relative_eq!(out.price, 100.0);
        assert_eq!(out.frac_s, 1.0);
        assert_relative_eq!(out.frac_d, 10.0 / 15.0);
    }

    #[test]
    fn floor_and_non_finite() {
        let b = bounds((-30.0, -10.0), (-25.0, -5.0));
        let out = clear_with_tick(&b, 1.0, &MarketParams::default(), 0.0).unwrap();
        assert!(out.floored);
        assert_eq!(out.price, 0.01);

        let b = bounds((f64::INFINITY, f64::INFINITY), (0.0, 1.0));
        assert!(clear_with_tick(&b, 1.0, &MarketParams::default(), 0.0).is_err());
    }

    #[test]
    fn gaussian_tick_can_go_down() {
        let mut rng = RngStream::from_seed(11);
        let ticks: Vec<f64> = (0..200).map(|_| draw_tick(&mut rng, TickMode::Gaussian)).collect();
        assert!(ticks.iter().any(|t| *t < 0.0));
        assert!(ticks.iter().all(|t| t.abs() < 0.1));
    }

    #[test]
    fn delta_update() {
        let st = MarketState::initial(1000.0);
        let e = [1005.0, 1000.0, 998.0, 1001.0];
        let next = update_deltas(&st, &e, 1000.0);
        assert_eq!(next.delta, [5.0, 0.0, -2.0, 1.0]);
        assert_eq!((next.price, next.prev_price), (1000.0, 1000.0));

        let same = update_deltas(&st, &[1003.0; 4], 1003.0);
        assert_eq!(same.delta, [0.0; 4]);
    }

    #[test]
    fn two_step_trace() {
        // step 1: flat history, F = 2 -> E = [1000, 1002, 1000, 1002]
        let mp = MarketParams::default();
        let st0 = MarketState::initial(1000.0);
        let e1 = focal_expectations(&st0, &mp, 2.0);
        assert_eq!(e1, [1000.0, 1002.0, 1000.0, 1002.0]);
        let p1 = interior_price(&side_bounds(&e1)).unwrap();
        assert_relative_eq!(p1, 1001.0);
        let st1 = update_deltas(&st0, &e1, p1);
        assert_eq!(st1.delta, [-1.0, 1.0, -1.0, 1.0]);

        // step 2: trend 1 -> +0.5; revisions -0.5*delta; F = 0
        let e2 = focal_expectations(&st1, &mp, 0.0);
        assert_eq!(e2, [1002.0, 1001.0, 1002.0, 1001.0]);
        let p2 = interior_price(&side_bounds(&e2)).unwrap();
        assert_relative_eq!(p2, 1001.5);
        let st2 = update_deltas(&st1, &e2, p2);
        assert_eq!(st2.delta, [0.5, -0.5, 0.5, -0.5]);
        assert_eq!(st2.prev_price, 1001.0);
    }
}
