//! One seeded run: publish the signal, form expectations, clear, update.
//!
//! Timing within period `t` (for `t = 1..=T`):
//!
//! 1. the auctioneer tick is drawn and the market clears `p_t` from the
//!    expectations built on `p_{t-1}`, `p_{t-2}`, the revisions and the
//!    flow `F_{t-1}` in force;
//! 2. the regime publishes `F_t` (which may look at `p_t`) and the level
//!    becomes `S_t = S_{t-1} + F_t`.
//!
//! Record `t` holds `p_t`, `F_t` and `S_t`. The initial flow is zero and
//! `S_0 = p_0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{self, Branch, MarketParams, MarketState};
use crate::error::{Error, Result};
use crate::regimes::{self, RegimeKind, RegimeParams, SignalState};
use crate::rng::{derive_seed, RngStream, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub regime: RegimeKind,
    pub market: MarketParams,
    pub regime_params: RegimeParams,
    pub periods: usize,
    pub p0: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            regime: RegimeKind::Hrt,
            market: MarketParams::default(),
            regime_params: RegimeParams::default(),
            periods: 500,
            p0: 1000.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.periods < 2 {
            return Err(Error::InvalidConfig(format!("periods must be >= 2, got {}", self.periods)));
        }
        if !(self.p0.is_finite() && self.p0 > 0.0) {
            return Err(Error::InvalidConfig(format!("initial price must be positive, got {}", self.p0)));
        }
        self.market.validate()?;
        self.regime_params.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub price: f64,
    pub flow: f64,
    pub level: f64,
    pub branch: Branch,
    pub frac_s: f64,
    pub frac_d: f64,
    pub overlap_ratio: f64,
    pub jumpstarted: bool,
    pub floored: bool,
}

impl StepRecord {
    pub fn auctioneer_used(&self) -> bool {
        self.branch == Branch::Fallback
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub regime: RegimeKind,
    pub seed: u64,
    pub p0: f64,
    /// Requested number of periods.
    pub periods: usize,
    pub records: Vec<StepRecord>,
    /// First step whose state was non-finite; `records` then holds the
    /// finite prefix.
    pub diverged_at: Option<usize>,
}

impl SeriesResult {
    pub fn prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.price).collect()
    }

    pub fn levels(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.level).collect()
    }

    pub fn auctioneer_count(&self) -> usize {
        self.records.iter().filter(|r| r.auctioneer_used()).count()
    }

    pub fn jumpstart_count(&self) -> usize {
        self.records.iter().filter(|r| r.jumpstarted).count()
    }

    pub fn floor_count(&self) -> usize {
        self.records.iter().filter(|r| r.floored).count()
    }
}

/// Runs one series. Deterministic in `cfg`.
pub fn run_series(cfg: &RunConfig) -> Result<SeriesResult> {
    cfg.validate()?;
    let mut rng = RngStream::from_seed(cfg.seed);
    let mut signal = SignalState::initial(cfg.p0);
    let mut market = MarketState::initial(cfg.p0);
    let mut records = Vec::with_capacity(cfg.periods);
    let mut diverged_at = None;

    for t in 1..=cfg.periods {
        let tick = engine::draw_tick(&mut rng, cfg.market.tick_mode);
        let expectations = engine::focal_expectations(&market, &cfg.market, signal.flow_prev);
        let bounds = engine::side_bounds(&expectations);
        if !bounds.is_finite() {
            diverged_at = Some(t);
            break;
        }
        let outcome = engine::clear_with_tick(&bounds, market.price, &cfg.market, tick)?;
        if !outcome.price.is_finite() {
            diverged_at = Some(t);
            break;
        }
        market = engine::update_deltas(&market, &expectations, outcome.price);
        signal.prices.push(outcome.price);

        let step = regimes::next_signal(cfg.regime, &signal, &cfg.regime_params, &mut rng);
        signal.commit(&step);
        if !(signal.level.is_finite() && market.delta.iter().all(|d| d.is_finite())) {
            diverged_at = Some(t);
            break;
        }

        records.push(StepRecord {
            t,
            price: outcome.price,
            flow: step.flow,
            level: signal.level,
            branch: outcome.branch,
            frac_s: outcome.frac_s,
            frac_d: outcome.frac_d,
            overlap_ratio: outcome.overlap_ratio,
            jumpstarted: step.jumpstarted,
            floored: outcome.floored,
        });
    }

    Ok(SeriesResult { regime: cfg.regime, seed: cfg.seed, p0: cfg.p0, periods: cfg.periods, records, diverged_at })
}

/// Seeds for replications `0..reps` of cell `(i_ms, i_md)`.
pub fn replication_seeds(base_seed: u64, i_ms: u32, i_md: u32, reps: u32) -> Vec<u64> {
    (0..reps).map(|rep| derive_seed(SeedSpec::new(base_seed, i_ms, i_md, rep))).collect()
}

/// Runs `reps` replications of `template` for one cell; result `r` uses
/// the seed of replication `r`. Replications run on the rayon pool and are
/// returned in replication order.
pub fn run_replications(template: &RunConfig, reps: u32, base_seed: u64, i_ms: u32, i_md: u32) -> Result<Vec<SeriesResult>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    replication_seeds(base_seed, i_ms, i_md, reps)
        .into_par_iter()
        .map(|seed| run_series(&RunConfig { seed, ..*template }))
        .collect()
}
