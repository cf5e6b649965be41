mod common;

use chrono::NaiveDate;
use common::rng;
use deeptrader::market_data::{align_calendar, split, AlignedPanel, AssetSeries, TradingCalendar};
use deeptrader::sentiment::{build_series, KeywordMap, ScoredHeadline};
use deeptrader::synthetic::{random_walk_panel, synthetic_headlines};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Series with random gaps so alignment has work to do.
fn ragged(seed: u64, n: usize) -> Vec<AssetSeries> {
    let mut r = rng(seed);
    random_walk_panel(n, 60, seed)
        .to_series()
        .into_iter()
        .map(|mut s| {
            s.bars.retain(|_| r.random_bool(0.85));
            s
        })
        .collect()
}

fn calendar() -> TradingCalendar {
    TradingCalendar::weekdays(
        NaiveDate::from_ymd_opt(2009, 12, 1).unwrap(),
        NaiveDate::from_ymd_opt(2010, 6, 30).unwrap(),
    )
}

fn headline_panel(seed: u64) -> (AlignedPanel, Vec<ScoredHeadline>, KeywordMap) {
    let panel = random_walk_panel(3, 30, seed);
    let (hs, kw) = synthetic_headlines(&panel, 0.6, seed);
    (panel, hs, kw)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aligned_series_share_dates(seed in any::<u64>(), n in 1usize..5) {
        let panel = align_calendar(&ragged(seed, n), &calendar()).unwrap();
        for bars in &panel.bars {
            prop_assert!(bars.iter().map(|b| b.date).eq(panel.dates.iter().copied()));
        }
        prop_assert!(panel.dates.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn alignment_is_idempotent(seed in any::<u64>(), n in 1usize..5) {
        let panel = align_calendar(&ragged(seed, n), &calendar()).unwrap();
        let again = align_calendar(&panel.to_series(), &calendar()).unwrap();
        prop_assert_eq!(panel, again);
    }

    #[test]
    fn split_then_concat_restores_dates(seed in any::<u64>(), cut in 1usize..59) {
        let panel = random_walk_panel(2, 60, seed);
        let (a, b) = split(&panel, panel.dates[cut]).unwrap();
        prop_assert_eq!(a.len(), cut);
        let joined: Vec<NaiveDate> = a.dates.iter().chain(&b.dates).copied().collect();
        prop_assert_eq!(joined, panel.dates);
    }

    #[test]
    fn scores_use_three_symbols(seed in any::<u64>()) {
        let (panel, hs, kw) = headline_panel(seed);
        let s = build_series(&hs, &kw, &panel);
        prop_assert_eq!(s.scores.len(), 3);
        for row in &s.scores {
            prop_assert_eq!(row.len(), panel.len());
            prop_assert!(row.iter().all(|v| [-1, 0, 1].contains(v)));
        }
    }

    #[test]
    fn headline_order_is_irrelevant(seed in any::<u64>()) {
        let (panel, mut hs, kw) = headline_panel(seed);
        let before = build_series(&hs, &kw, &panel);
        hs.shuffle(&mut rng(seed ^ 1));
        prop_assert_eq!(before, build_series(&hs, &kw, &panel));
    }

    #[test]
    fn unmatched_headline_is_ignored(seed in any::<u64>(), day in 0usize..30, p in 0.0f64..1.0) {
        let (panel, mut hs, kw) = headline_panel(seed);
        let before = build_series(&hs, &kw, &panel);
        hs.push(ScoredHeadline { date: panel.dates[day], text: "Central bank holds rates".into(), p_pos: p, p_neg: 1.0 - p, p_neu: 0.0 });
        prop_assert_eq!(before, build_series(&hs, &kw, &panel));
    }
}
