//! Whole-run traces checked against a step-by-step replay of the random
//! stream.

use exsim_core::engine::{self, MarketParams, MarketState};
use exsim_core::regimes::{PeriodDraws, RegimeKind, RegimeParams, SignalState};
use exsim_core::rng::RngStream;
use exsim_core::simulation::{run_series, RunConfig};
use exsim_core::sweep::{a_sweep, SweepConfig};

fn cfg(regime: RegimeKind, seed: u64) -> RunConfig {
    RunConfig { regime, seed, periods: 300, ..RunConfig::default() }
}

// The draws each period consumes, in stream order: tick first, then the
// regime primitives.
fn replay_draws(seed: u64, params: &RegimeParams, mp: &MarketParams, periods: usize) -> Vec<PeriodDraws> {
    let mut rng = RngStream::from_seed(seed);
    (0..periods)
        .map(|_| {
            engine::draw_tick(&mut rng, mp.tick_mode);
            PeriodDraws::draw(&mut rng, params)
        })
        .collect()
}

#[test]
fn hca_flow_is_base_plus_error() {
    let c = cfg(RegimeKind::Hca, 31);
    let run = run_series(&c).unwrap();
    let draws = replay_draws(c.seed, &c.regime_params, &c.market, c.periods);
    for (r, d) in run.records.iter().zip(&draws) {
        if !r.jumpstarted {
            assert_eq!(r.flow, d.base + d.eps);
        }
    }
}

#[test]
fn hca_and_hrt_share_base_and_error_streams() {
    let hca = run_series(&cfg(RegimeKind::Hca, 32)).unwrap();
    let hrt = run_series(&cfg(RegimeKind::Hrt, 32)).unwrap();
    let draws = replay_draws(32, &RegimeParams::default(), &MarketParams::default(), 300);
    let mut prev = 0.0;
    for ((a, b), d) in hca.records.iter().zip(&hrt.records).zip(&draws) {
        assert_eq!(a.flow, d.base + d.eps);
        if !b.jumpstarted {
            // HRT adds the trend term on top of the same base and error
            let trend = b.flow - (d.base + d.eps);
            assert!((trend - prev * (d.trend - 0.5)).abs() < 1e-12);
        }
        prev = b.flow;
    }
    // with no trend band the two regimes coincide
    let flat = RegimeParams { b: 0.0, ..RegimeParams::default() };
    let x = run_series(&RunConfig { regime_params: flat, ..cfg(RegimeKind::Hca, 33) }).unwrap();
    let y = run_series(&RunConfig { regime_params: flat, ..cfg(RegimeKind::Hrt, 33) }).unwrap();
    assert_eq!(x.records, y.records);
}

#[test]
fn fva_and_tra_s_share_the_error_stream() {
    let seed = 34;
    let fva = run_series(&cfg(RegimeKind::Fva, seed)).unwrap();
    let tra = run_series(&cfg(RegimeKind::TraS, seed)).unwrap();
    let draws = replay_draws(seed, &RegimeParams::default(), &MarketParams::default(), 300);
    let p0 = 1000.0;
    let price_at = |recs: &[exsim_core::simulation::StepRecord], t: usize| if t == 0 { p0 } else { recs[t - 1].price };
    for t in 1..=300 {
        let d = &draws[t - 1];
        let f = &fva.records[t - 1];
        if !f.jumpstarted {
            let momentum = price_at(&fva.records, t.saturating_sub(1)) - price_at(&fva.records, t.saturating_sub(2));
            assert!((f.flow - momentum - d.eps).abs() < 1e-9, "t={t}");
        }
        let s = &tra.records[t - 1];
        if !s.jumpstarted {
            let reversion = -(price_at(&tra.records, t) - p0);
            assert!((s.flow - reversion - d.base - d.eps).abs() < 1e-9, "t={t}");
        }
    }
}

#[test]
fn every_regime_sees_the_same_ticks() {
    let mut rng = RngStream::from_seed(35);
    let params = RegimeParams::default();
    let ticks: Vec<f64> = (0..300)
        .map(|_| {
            let t = engine::draw_tick(&mut rng, MarketParams::default().tick_mode);
            PeriodDraws::draw(&mut rng, &params);
            t
        })
        .collect();
    let mut fallbacks = 0;
    for kind in RegimeKind::ALL {
        let run = run_series(&cfg(kind, 35)).unwrap();
        assert_eq!(run.records.len(), 300, "{kind:?}");
        let mut prev = 1000.0;
        for (r, tick) in run.records.iter().zip(&ticks) {
            if r.branch == engine::Branch::Fallback && !r.floored {
                assert_eq!(r.price, prev + tick, "{kind:?} t={}", r.t);
                fallbacks += 1;
            }
            prev = r.price;
        }
    }
    assert!(fallbacks > 0);
}

#[test]
fn noise_free_market_stays_at_rest() {
    // zero flow from every draw: no revision, no trend, the price never moves
    let mp = MarketParams::default().with_confidence(0.3, 0.8);
    let params = RegimeParams { a: 0.0, ..RegimeParams::default() };
    for kind in [RegimeKind::Hca, RegimeKind::TraF, RegimeKind::TraS, RegimeKind::Fva] {
        let mut market = MarketState::initial(1000.0);
        let mut signal = SignalState::initial(1000.0);
        for _ in 0..200 {
            let e = engine::focal_expectations(&market, &mp, signal.flow_prev);
            let b = engine::side_bounds(&e);
            let out = engine::clear_with_tick(&b, market.price, &mp, 0.0).unwrap();
            market = engine::update_deltas(&market, &e, out.price);
            signal.prices.push(out.price);
            let step = exsim_core::regimes::signal_from_draws(kind, &signal, &params, &PeriodDraws::ZERO);
            signal.commit(&step);
            assert_eq!(market.price, 1000.0, "{kind:?}");
            assert_eq!(step.flow, 0.0);
        }
    }
}

#[test]
fn fva_prices_trend_upward_with_noise_amplitude() {
    let sweep = SweepConfig {
        regimes: vec![RegimeKind::Fva],
        grid_step: 0.1,
        reps: 100,
        ..SweepConfig::default()
    };
    let a: Vec<f64> = (0..=5).map(|k| k as f64 * 0.1).collect();
    let rows = a_sweep(&sweep, &a, Some((0.7, 0.7))).unwrap();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_price.unwrap()).collect();
    let slope = exsim_core::stats::pearson(&a, &y).unwrap();
    assert!(slope > 0.0 && y[5] >= y[0], "{y:?}");
}
