//! Generated markets for tests, demos and smoke runs.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::market_data::{AlignedPanel, Bar};
use crate::sentiment::{KeywordMap, ScoredHeadline};

/// Weekday dates starting on the first Monday on or after 2010-01-04.
pub fn weekday_dates(len: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date");
    start
        .iter_days()
        .filter(|d| d.weekday().number_from_monday() <= 5)
        .take(len)
        .collect()
}

fn flat_bar(date: NaiveDate, close: f64) -> Bar {
    Bar {
        date,
        open: close,
        high: close * 1.002,
        low: close * 0.998,
        close,
        adj_close: close,
        volume: 1_000_000.0,
    }
}

/// Close of a sawtooth that climbs linearly from `base` to `base * (1 + amplitude)`
/// over `period` bars and then drops back.
pub fn sawtooth_price(t: usize, period: usize, amplitude: f64, base: f64) -> f64 {
    let phase = (t % period) as f64 / (period - 1) as f64;
    base * (1.0 + amplitude * phase)
}

/// Single-asset deterministic sawtooth market.
pub fn sawtooth_panel(len: usize, period: usize, amplitude: f64, base: f64) -> AlignedPanel {
    let dates = weekday_dates(len);
    let bars = dates
        .iter()
        .enumerate()
        .map(|(t, d)| flat_bar(*d, sawtooth_price(t, period, amplitude, base)))
        .collect();
    AlignedPanel { symbols: vec!["SAW".into()], dates, bars: vec![bars] }
}

/// Geometric random walk with ~2% daily volatility and consistent OHLC bars.
pub fn random_walk_panel(num_assets: usize, len: usize, seed: u64) -> AlignedPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = weekday_dates(len);
    let bars = (0..num_assets)
        .map(|_| {
            let mut close: f64 = rng.random_range(20.0..200.0);
            dates
                .iter()
                .map(|&date| {
                    let open = close;
                    let z: f64 = rng.sample(StandardNormal);
                    close = open * (0.02 * z).exp();
                    let hi_pad: f64 = rng.random_range(0.0..0.01);
                    let lo_pad: f64 = rng.random_range(0.0..0.01);
                    Bar {
                        date,
                        open,
                        high: open.max(close) * (1.0 + hi_pad),
                        low: open.min(close) * (1.0 - lo_pad),
                        close,
                        adj_close: close,
                        volume: rng.random_range(1e5..1e6_f64).round(),
                    }
                })
                .collect()
        })
        .collect();
    AlignedPanel {
        symbols: (0..num_assets).map(|i| format!("RW{i}")).collect(),
        dates,
        bars,
    }
}

/// Panel whose closes all stay at `price`.
pub fn flat_panel(num_assets: usize, len: usize, price: f64) -> AlignedPanel {
    let dates = weekday_dates(len);
    let bars = (0..num_assets).map(|_| dates.iter().map(|d| flat_bar(*d, price)).collect()).collect();
    AlignedPanel {
        symbols: (0..num_assets).map(|i| format!("FLAT{i}")).collect(),
        dates,
        bars,
    }
}

/// Panel whose closes rise by `step` per bar.
pub fn ramp_panel(num_assets: usize, len: usize, start: f64, step: f64) -> AlignedPanel {
    let dates = weekday_dates(len);
    let bars = (0..num_assets)
        .map(|i| {
            dates
                .iter()
                .enumerate()
                .map(|(t, d)| flat_bar(*d, start + i as f64 + step * t as f64))
                .collect()
        })
        .collect();
    AlignedPanel {
        symbols: (0..num_assets).map(|i| format!("UP{i}")).collect(),
        dates,
        bars,
    }
}

/// One headline per asset and day naming the asset's symbol, positive with
/// probability `accuracy` when the next close rises and negative otherwise.
/// The keyword map maps each symbol to itself.
pub fn synthetic_headlines(panel: &AlignedPanel, accuracy: f64, seed: u64) -> (Vec<ScoredHeadline>, KeywordMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for t in 0..panel.len().saturating_sub(1) {
        for (i, sym) in panel.symbols.iter().enumerate() {
            let up = panel.bars[i][t + 1].adj_close > panel.bars[i][t].adj_close;
            let positive = up == rng.random_bool(accuracy);
            let strong: f64 = rng.random_range(0.5..0.9);
            let weak = (1.0 - strong) * rng.random_range(0.0..1.0);
            let (p_pos, p_neg) = if positive { (strong, weak) } else { (weak, strong) };
            out.push(ScoredHeadline {
                date: panel.dates[t],
                text: format!("{sym} shares {} in session", if positive { "rally" } else { "slip" }),
                p_pos,
                p_neg,
                p_neu: 1.0 - p_pos - p_neg,
            });
        }
    }
    let map = panel.symbols.iter().map(|s| (s.clone(), vec![s.clone()])).collect();
    (out, KeywordMap::new(map).expect("symbols are nonempty"))
}
