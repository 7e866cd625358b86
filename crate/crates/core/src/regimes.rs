//! Common-knowledge regimes: the rules publishing the fundamental flow `F_t`.
//!
//! Every regime consumes the same random primitives in the same order each
//! period (see [`PeriodDraws`]), whether or not it uses them. Two regimes
//! run from one seed therefore share their noise realizations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegimeKind {
    /// Historical cost: bounded Gaussian flows.
    #[serde(rename = "hca")]
    Hca,
    /// Historical cost with a random-coefficient trend on the previous flow.
    #[serde(rename = "hrt")]
    Hrt,
    /// Fair value: the lagged market price change.
    #[serde(rename = "fva")]
    Fva,
    /// Target reverting toward a fixed reference.
    #[serde(rename = "tra-f")]
    TraF,
    /// Target reverting with a stochastic band.
    #[serde(rename = "tra-s")]
    TraS,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 5] = [RegimeKind::Hca, RegimeKind::Hrt, RegimeKind::Fva, RegimeKind::TraF, RegimeKind::TraS];

    /// Lowercase identifier used on the command line and in file names.
    pub fn slug(self) -> &'static str {
        match self {
            RegimeKind::Hca => "hca",
            RegimeKind::Hrt => "hrt",
            RegimeKind::Fva => "fva",
            RegimeKind::TraF => "tra-f",
            RegimeKind::TraS => "tra-s",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RegimeKind::Hca => "HCA",
            RegimeKind::Hrt => "HRT",
            RegimeKind::Fva => "FVA",
            RegimeKind::TraF => "TRA-F",
            RegimeKind::TraS => "TRA-S",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hca" => Ok(RegimeKind::Hca),
            "hrt" => Ok(RegimeKind::Hrt),
            "fva" => Ok(RegimeKind::Fva),
            "tra-f" | "traf" | "tra_f" => Ok(RegimeKind::TraF),
            "tra-s" | "tras" | "tra_s" => Ok(RegimeKind::TraS),
            other => Err(Error::InvalidArgument(format!(
                "unknown regime `{other}` (expected one of hca, hrt, fva, tra-f, tra-s)"
            ))),
        }
    }
}

/// What the target-reverting regimes revert toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraAnchor {
    /// The fixed core value, equal to the initial price.
    Fixed,
    /// The cumulated signal level `S_{t-1}`.
    Cumulated,
    /// The previous flow `F_{t-1}`.
    LaggedFlow,
}

impl FromStr for TraAnchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(TraAnchor::Fixed),
            "cumulated" => Ok(TraAnchor::Cumulated),
            "lagged-flow" | "lagged_flow" => Ok(TraAnchor::LaggedFlow),
            other => Err(Error::InvalidArgument(format!(
                "unknown tra-anchor `{other}` (expected fixed, cumulated or lagged-flow)"
            ))),
        }
    }
}

impl fmt::Display for TraAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraAnchor::Fixed => "fixed",
            TraAnchor::Cumulated => "cumulated",
            TraAnchor::LaggedFlow => "lagged-flow",
        })
    }
}

/// Scale of the measurement error `ε = N[-a, +a]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonSigma {
    /// Standard normal rejected into `[-a, a]`.
    Unit,
    /// `a` times a standard normal rejected into `[-1, 1]`.
    Scaled,
}

impl FromStr for EpsilonSigma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unit" => Ok(EpsilonSigma::Unit),
            "scaled" => Ok(EpsilonSigma::Scaled),
            other => Err(Error::InvalidArgument(format!("unknown epsilon-sigma `{other}` (expected unit or scaled)"))),
        }
    }
}

impl fmt::Display for EpsilonSigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpsilonSigma::Unit => "unit",
            EpsilonSigma::Scaled => "scaled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    /// Bound of the measurement error.
    pub a: f64,
    /// Width of the HRT trend band.
    pub b: f64,
    pub tra_anchor: TraAnchor,
    pub epsilon_sigma: EpsilonSigma,
}

impl Default for RegimeParams {
    fn default() -> Self {
        Self { a: 0.1, b: 1.0, tra_anchor: TraAnchor::Fixed, epsilon_sigma: EpsilonSigma::Unit }
    }
}

impl RegimeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::InvalidConfig(format!("a must be finite and >= 0, got {}", self.a)));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(Error::InvalidConfig(format!("b must be finite and >= 0, got {}", self.b)));
        }
        Ok(())
    }
}

/// The random primitives consumed by every regime in one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodDraws {
    /// `N[-1, 1]`: the HCA/HRT flow and the TRA-S band `Δ`.
    pub base: f64,
    /// Raw `U[0, 1)` mapped onto the HRT coefficient band.
    pub trend: f64,
    /// Measurement error `ε`.
    pub eps: f64,
    /// `U[0, 1)` used by the jump-start.
    pub jump: f64,
}

impl PeriodDraws {
    pub const ZERO: PeriodDraws = PeriodDraws { base: 0.0, trend: 0.5, eps: 0.0, jump: 0.0 };

    /// Draws all primitives in a fixed order: base, trend, eps, jump.
    pub fn draw(rng: &mut RngStream, params: &RegimeParams) -> Self {
        let base = rng.truncated_gaussian(-1.0, 1.0).expect("valid bounds");
        let trend = rng.next_f64();
        let eps = if params.a > 0.0 {
            match params.epsilon_sigma {
                EpsilonSigma::Unit => rng.truncated_gaussian(-params.a, params.a).expect("a > 0"),
                EpsilonSigma::Scaled => params.a * rng.truncated_gaussian(-1.0, 1.0).expect("valid bounds"),
            }
        } else {
            0.0
        };
        let jump = rng.next_f64();
        Self { base, trend, eps, jump }
    }
}

/// Primitive kinds, in consumption order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    BoundedGaussian,
    Uniform,
    Epsilon,
    JumpUniform,
}

/// The per-period draw schedule of a regime.
///
/// It is the same for every regime; regimes that ignore a primitive still
/// consume it.
pub fn random_draw_schedule(_kind: RegimeKind) -> &'static [Primitive] {
    &[Primitive::BoundedGaussian, Primitive::Uniform, Primitive::Epsilon, Primitive::JumpUniform]
}

/// The last three clearing prices, newest first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceHistory {
    pub current: f64,
    pub lag1: f64,
    pub lag2: f64,
}

impl PriceHistory {
    pub fn flat(p0: f64) -> Self {
        Self { current: p0, lag1: p0, lag2: p0 }
    }

    pub fn push(&mut self, price: f64) {
        self.lag2 = self.lag1;
        self.lag1 = self.current;
        self.current = price;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalState {
    /// Previously published flow `F_{t-1}`.
    pub flow_prev: f64,
    /// Cumulated signal `S_{t-1}`.
    pub level: f64,
    /// Fixed reference value for the target-reverting regimes.
    pub core: f64,
    pub prices: PriceHistory,
}

impl SignalState {
    /// Start-of-run state: zero initial flow, level and core at `p0`, flat
    /// price history.
    pub fn initial(p0: f64) -> Self {
        Self { flow_prev: 0.0, level: p0, core: p0, prices: PriceHistory::flat(p0) }
    }

    /// Accepts a published flow: `S ← S + F`, `F_prev ← F`.
    pub fn commit(&mut self, step: &SignalStep) {
        self.level += step.flow;
        self.flow_prev = step.flow;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalStep {
    pub flow: f64,
    pub jumpstarted: bool,
}

/// The regime's candidate flow before the jump-start check.
pub fn candidate_flow(kind: RegimeKind, st: &SignalState, params: &RegimeParams, d: &PeriodDraws) -> f64 {
    let p = &st.prices;
    let anchor = || match params.tra_anchor {
        TraAnchor::Fixed => st.core,
        TraAnchor::Cumulated => st.level,
        TraAnchor::LaggedFlow => st.flow_prev,
    };
    match kind {
        RegimeKind::Hca => d.base + d.eps,
        RegimeKind::Hrt => {
            let coeff = params.b * (d.trend - 0.5);
            d.base + st.flow_prev * coeff + d.eps
        }
        RegimeKind::Fva => (p.lag1 - p.lag2) + d.eps,
        RegimeKind::TraF => -(p.current - anchor()) + d.eps,
        RegimeKind::TraS => -(p.current - anchor()) + d.base + d.eps,
    }
}

/// Computes the flow for one period from pre-drawn primitives, applying
/// the jump-start when the cumulated signal would fall to zero or below.
///
/// The jump-start replaces the flow by `F_{t-1} + u`. If that still leaves
/// the level non-positive, the level restarts at `u` above zero: the flow
/// becomes `u' - S_{t-1}` with `u' = max(u, 1e-6)`.
pub fn signal_from_draws(kind: RegimeKind, st: &SignalState, params: &RegimeParams, d: &PeriodDraws) -> SignalStep {
    let flow = candidate_flow(kind, st, params, d);
    if st.level + flow > 0.0 || !flow.is_finite() {
        return SignalStep { flow, jumpstarted: false };
    }
    let mut replaced = st.flow_prev + d.jump;
    if !(st.level + replaced > 0.0) {
        replaced = d.jump.max(1e-6) - st.level;
    }
    SignalStep { flow: replaced, jumpstarted: true }
}

/// Draws this period's primitives and computes the flow.
pub fn next_signal(kind: RegimeKind, st: &SignalState, params: &RegimeParams, rng: &mut RngStream) -> SignalStep {
    let draws = PeriodDraws::draw(rng, params);
    signal_from_draws(kind, st, params, &draws)
}
