//! Daily multi-asset trading environment.
//!
//! Each step the agent sends one value in `[-1, 1]` per asset. The value is
//! scaled to an integer share order in `[-k_max, k_max]`. Sells settle first
//! at the current close, then buys fill in asset order with whatever cash
//! remains. The reward is the change in portfolio value from the decision
//! close to the next close, net of commission.

use std::io::Write;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::{self, IndicatorBlock, NUM_INDICATORS};
use crate::market_data::{AlignedPanel, PriceField};
use crate::sentiment::SentimentSeries;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("panel has {len} rows but at least {need} are required")]
    PanelTooShort { len: usize, need: usize },
    #[error("episode is finished; call reset")]
    EpisodeDone,
    #[error("expected {expected} action components, got {got}")]
    ActionShape { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("market data mismatch: {0}")]
    Data(String),
    #[error("trace export failed: {0}")]
    Trace(#[from] csv::Error),
}

/// Which market signals enter the observation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Close price only.
    Baseline,
    /// Close plus the ten indicators.
    Tech,
    /// Close, sentiment and the ten indicators.
    #[default]
    Full,
}

impl Preset {
    pub fn features_per_asset(self) -> usize {
        match self {
            Preset::Baseline => 1,
            Preset::Tech => 1 + NUM_INDICATORS,
            Preset::Full => 2 + NUM_INDICATORS,
        }
    }

    /// `1 + N` position slots plus the market signal slots.
    pub fn observation_len(self, num_assets: usize) -> usize {
        1 + num_assets + num_assets * self.features_per_asset()
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Baseline => "baseline",
            Preset::Tech => "tech",
            Preset::Full => "full",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Preset::Baseline),
            "tech" => Ok(Preset::Tech),
            "full" => Ok(Preset::Full),
            other => Err(format!("unknown preset `{other}` (baseline|tech|full)")),
        }
    }
}

/// Trading rules and capital.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub initial_capital: f64,
    pub k_max: u32,
    pub d_buy: f64,
    pub d_sell: f64,
    pub lookback: usize,
    pub preset: Preset,
    pub price_field: PriceField,
    /// Drop every sell order (buy-and-hold ablation).
    pub no_sell: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_capital: 10_000.0,
            k_max: 100,
            d_buy: 0.001,
            d_sell: 0.001,
            lookback: 20,
            preset: Preset::Full,
            price_field: PriceField::AdjClose,
            no_sell: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.initial_capital > 0.0) || !self.initial_capital.is_finite() {
            return Err(EnvError::Config("initial_capital must be positive".into()));
        }
        if self.k_max == 0 {
            return Err(EnvError::Config("k_max must be at least 1".into()));
        }
        for (name, d) in [("d_buy", self.d_buy), ("d_sell", self.d_sell)] {
            if !(0.0..1.0).contains(&d) {
                return Err(EnvError::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.lookback == 0 {
            return Err(EnvError::Config("lookback must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything the environment reads from the market, shared between runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketData {
    pub panel: AlignedPanel,
    pub indicators: Vec<IndicatorBlock>,
    pub sentiment: SentimentSeries,
    pub lookback: usize,
    pub price_field: PriceField,
}

impl MarketData {
    /// Computes indicators and pairs them with `sentiment` (zeros if absent).
    pub fn build(
        panel: AlignedPanel,
        sentiment: Option<SentimentSeries>,
        lookback: usize,
        price_field: PriceField,
    ) -> Result<Self, EnvError> {
        let need = indicators::warmup(lookback) + 2;
        if panel.len() < need {
            return Err(EnvError::PanelTooShort { len: panel.len(), need });
        }
        let blocks = indicators::compute_block(&panel, lookback, price_field)
            .map_err(|e| EnvError::Data(e.to_string()))?;
        let sentiment = sentiment.unwrap_or_else(|| SentimentSeries::zeros(&panel));
        if sentiment.scores.len() != panel.num_assets() || sentiment.scores.iter().any(|s| s.len() != panel.len()) {
            return Err(EnvError::Data("sentiment grid does not match panel".into()));
        }
        Ok(Self { panel, indicators: blocks, sentiment, lookback, price_field })
    }

    pub fn num_assets(&self) -> usize {
        self.panel.num_assets()
    }

    /// First tradable row.
    pub fn start_index(&self) -> usize {
        indicators::warmup(self.lookback)
    }

    /// Number of steps in a full episode.
    pub fn episode_len(&self) -> usize {
        self.panel.len() - self.start_index() - 1
    }
}

/// Cash plus whole-share holdings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub cash: f64,
    pub holdings: Vec<i64>,
}

impl Portfolio {
    pub fn new(cash: f64, num_assets: usize) -> Self {
        Self { cash, holdings: vec![0; num_assets] }
    }
}

/// `cash + Σ holdings_i · price_i`
pub fn portfolio_value(portfolio: &Portfolio, prices: &[f64]) -> f64 {
    portfolio.cash + portfolio.holdings.iter().zip(prices).map(|(&h, &p)| h as f64 * p).sum::<f64>()
}

/// Maps raw actions to share counts; inputs outside `[-1, 1]` are clamped.
pub fn scale_action(raw: &[f64], k_max: u32) -> Vec<i64> {
    let k = f64::from(k_max);
    raw.iter()
        .map(|&a| {
            let a = if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
            (a * k).round() as i64
        })
        .collect()
}

/// Outcome of [`execute`].
#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    pub portfolio: Portfolio,
    pub commission: f64,
    /// Signed shares actually traded per asset.
    pub executed: Vec<i64>,
}

/// Settles `orders` at `prices`: all sells first, then buys in ascending asset order.
pub fn execute(orders: &[i64], portfolio: &Portfolio, prices: &[f64], d_buy: f64, d_sell: f64) -> Execution {
    let mut p = portfolio.clone();
    let mut executed = vec![0i64; orders.len()];
    let mut commission = 0.0;

    for (i, &k) in orders.iter().enumerate() {
        if k < 0 {
            let shares = (-k).min(p.holdings[i]);
            if shares > 0 {
                let gross = shares as f64 * prices[i];
                let fee = gross * d_sell;
                p.cash += gross - fee;
                p.holdings[i] -= shares;
                executed[i] = -shares;
                commission += fee;
            }
        }
    }

    for (i, &k) in orders.iter().enumerate() {
        if k > 0 {
            let unit = prices[i] * (1.0 + d_buy);
            let mut shares = k.min((p.cash / unit).floor().max(0.0) as i64);
            let cost = |n: i64| {
                let gross = n as f64 * prices[i];
                (gross, gross * d_buy)
            };
            // floor() can overshoot by one share under rounding
            while shares > 0 && {
                let (g, f) = cost(shares);
                g + f > p.cash
            } {
                shares -= 1;
            }
            if shares > 0 {
                let (gross, fee) = cost(shares);
                p.cash -= gross + fee;
                p.holdings[i] += shares;
                executed[i] = shares;
                commission += fee;
            }
        }
    }

    Execution { portfolio: p, commission, executed }
}

/// Diagnostics for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Date of the decision bar.
    pub date: NaiveDate,
    pub value_before: f64,
    /// Portfolio value at the next close.
    pub value: f64,
    pub commission: f64,
    pub executed: Vec<i64>,
    pub cash: f64,
    pub holdings: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    /// Change in portfolio value, in currency units.
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One episode over a [`MarketData`] panel.
#[derive(Clone, Debug)]
pub struct TradingEnv {
    config: EnvConfig,
    data: Arc<MarketData>,
    portfolio: Portfolio,
    t: usize,
    done: bool,
}

impl TradingEnv {
    pub fn new(config: EnvConfig, data: Arc<MarketData>) -> Result<Self, EnvError> {
        config.validate()?;
        if data.lookback != config.lookback || data.price_field != config.price_field {
            return Err(EnvError::Data("market data was prepared with a different lookback or price field".into()));
        }
        let need = data.start_index() + 2;
        if data.panel.len() < need {
            return Err(EnvError::PanelTooShort { len: data.panel.len(), need });
        }
        let n = data.num_assets();
        let start = data.start_index();
        Ok(Self { portfolio: Portfolio::new(config.initial_capital, n), config, data, t: start, done: false })
    }

    /// Restores the initial portfolio and returns the first observation.
    pub fn reset(&mut self) -> Vec<f64> {
        self.portfolio = Portfolio::new(self.config.initial_capital, self.data.num_assets());
        self.t = self.data.start_index();
        self.done = false;
        self.observe()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn data(&self) -> &Arc<MarketData> {
        &self.data
    }

    pub fn portfolio(&self) -> &Portfolio {
        &self.portfolio
    }

    pub fn cursor(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn num_assets(&self) -> usize {
        self.data.num_assets()
    }

    pub fn observation_len(&self) -> usize {
        self.config.preset.observation_len(self.num_assets())
    }

    pub fn prices(&self) -> Vec<f64> {
        self.data.panel.prices_at(self.t, self.config.price_field)
    }

    pub fn value(&self) -> f64 {
        portfolio_value(&self.portfolio, &self.prices())
    }

    /// `[cash, holdings..., per asset (close[, sentiment][, indicators])]`
    pub fn observe(&self) -> Vec<f64> {
        let n = self.num_assets();
        let mut obs = Vec::with_capacity(self.observation_len());
        obs.push(self.portfolio.cash);
        obs.extend(self.portfolio.holdings.iter().map(|&h| h as f64));
        for i in 0..n {
            obs.push(self.data.panel.price(i, self.t, self.config.price_field));
            if self.config.preset == Preset::Full {
                obs.push(f64::from(self.data.sentiment.score(i, self.t)));
            }
            if self.config.preset != Preset::Baseline {
                obs.extend(self.data.indicators[i].row(self.t));
            }
        }
        obs
    }

    pub fn step(&mut self, raw_action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let n = self.num_assets();
        if raw_action.len() != n {
            return Err(EnvError::ActionShape { expected: n, got: raw_action.len() });
        }
        let mut orders = scale_action(raw_action, self.config.k_max);
        if self.config.no_sell {
            orders.iter_mut().for_each(|k| *k = (*k).max(0));
        }
        let prices = self.prices();
        let value_before = portfolio_value(&self.portfolio, &prices);
        let date = self.data.panel.dates[self.t];
        let exec = execute(&orders, &self.portfolio, &prices, self.config.d_buy, self.config.d_sell);
        self.portfolio = exec.portfolio;
        self.t += 1;
        let value = self.value();
        self.done = self.t + 1 >= self.data.panel.len();
        Ok(StepResult {
            observation: self.observe(),
            reward: value - value_before,
            done: self.done,
            info: StepInfo {
                date,
                value_before,
                value,
                commission: exec.commission,
                executed: exec.executed,
                cash: self.portfolio.cash,
                holdings: self.portfolio.holdings.clone(),
            },
        })
    }
}

/// Writes a per-step audit trail:
/// `date,V_t,reward,cash,commission,holdings_<SYM>...,executed_<SYM>...`.
pub fn write_trace<W: Write>(out: W, symbols: &[String], steps: &[StepInfo]) -> Result<(), EnvError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string(), "V_t".into(), "reward".into(), "cash".into(), "commission".into()];
    header.extend(symbols.iter().map(|s| format!("holdings_{s}")));
    header.extend(symbols.iter().map(|s| format!("executed_{s}")));
    w.write_record(&header)?;
    for s in steps {
        let mut row = vec![
            s.date.to_string(),
            s.value.to_string(),
            (s.value - s.value_before).to_string(),
            s.cash.to_string(),
            s.commission.to_string(),
        ];
        row.extend(s.holdings.iter().map(i64::to_string));
        row.extend(s.executed.iter().map(i64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| EnvError::Trace(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{flat_panel, ramp_panel};

    fn data(panel: AlignedPanel) -> Arc<MarketData> {
        Arc::new(MarketData::build(panel, None, 20, PriceField::AdjClose).unwrap())
    }

    fn config(capital: f64, preset: Preset) -> EnvConfig {
        EnvConfig { initial_capital: capital, k_max: 100, d_buy: 0.0, d_sell: 0.0, lookback: 20, preset, ..Default::default() }
    }

    #[test]
    fn reset_observation_layout() {
        let mut env = TradingEnv::new(config(1000.0, Preset::Full), data(flat_panel(3, 40, 10.0))).unwrap();
        let obs = env.reset();
        assert_eq!(obs.len(), 40);
        assert_eq!(&obs[..4], &[1000.0, 0.0, 0.0, 0.0]);
        // sentiment slot of each asset
        for i in 0..3 {
            assert_eq!(obs[4 + 12 * i], 10.0);
            assert_eq!(obs[4 + 12 * i + 1], 0.0);
        }
        let mut env = TradingEnv::new(config(1000.0, Preset::Full), data(flat_panel(1, 40, 10.0))).unwrap();
        assert_eq!(env.reset().len(), 14);
    }

    #[test]
    fn preset_widths() {
        assert_eq!(Preset::Baseline.observation_len(3), 7);
        assert_eq!(Preset::Tech.observation_len(3), 37);
        assert_eq!(Preset::Full.observation_len(3), 40);
        assert_eq!("tech".parse::<Preset>(), Ok(Preset::Tech));
    }

    #[test]
    fn indicator_slots_match_blocks() {
        let d = data(crate::synthetic::random_walk_panel(2, 60, 9));
        let mut env = TradingEnv::new(config(1000.0, Preset::Tech), d.clone()).unwrap();
        let obs = env.reset();
        let t = env.cursor();
        assert_eq!(t, 26);
        for i in 0..2 {
            let base = 3 + 11 * i;
            assert_eq!(obs[base], d.panel.price(i, t, PriceField::AdjClose));
            assert_eq!(&obs[base + 1..base + 11], &d.indicators[i].row(t));
        }
    }

    #[test]
    fn scale_examples() {
        assert_eq!(scale_action(&[1.0, 0.0, -0.505], 100), vec![100, 0, -51]);
        assert_eq!(scale_action(&[0.505, 2.5, -7.0], 100), vec![51, 100, -100]);
        assert_eq!(scale_action(&[0.004, -0.004], 100), vec![0, 0]);
    }

    #[test]
    fn sell_first_funds_buys() {
        let p = Portfolio { cash: 0.0, holdings: vec![10, 0] };
        let e = execute(&[-5, 2], &p, &[10.0, 20.0], 0.0, 0.0);
        assert_eq!(e.portfolio.cash, 10.0);
        assert_eq!(e.portfolio.holdings, vec![5, 2]);
        assert_eq!(e.executed, vec![-5, 2]);
    }

    #[test]
    fn partial_fill_and_sell_clamp() {
        let p = Portfolio { cash: 100.0, holdings: vec![0] };
        let e = execute(&[20], &p, &[10.0], 0.0, 0.0);
        assert_eq!(e.executed, vec![10]);
        assert_eq!(e.portfolio.cash, 0.0);

        let p = Portfolio { cash: 0.0, holdings: vec![3] };
        let e = execute(&[-5], &p, &[10.0], 0.0, 0.0);
        assert_eq!(e.executed, vec![-3]);
        assert_eq!(e.portfolio.holdings, vec![0]);
        assert_eq!(e.portfolio.cash, 30.0);
    }

    #[test]
    fn buys_fill_in_asset_order() {
        let p = Portfolio { cash: 100.0, holdings: vec![0, 0] };
        let e = execute(&[8, 8], &p, &[10.0, 10.0], 0.0, 0.0);
        assert_eq!(e.executed, vec![8, 2]);
    }

    #[test]
    fn commission_on_traded_amount() {
        let p = Portfolio { cash: 1000.0, holdings: vec![5] };
        let e = execute(&[-2], &p, &[100.0], 0.01, 0.02);
        assert!((e.commission - 4.0).abs() < 1e-12);
        assert!((e.portfolio.cash - 1196.0).abs() < 1e-9);
    }

    #[test]
    fn portfolio_value_examples() {
        assert_eq!(portfolio_value(&Portfolio::new(1000.0, 2), &[5.0, 6.0]), 1000.0);
        assert_eq!(portfolio_value(&Portfolio { cash: 0.0, holdings: vec![5] }, &[20.0]), 100.0);
    }

    #[test]
    fn step_rewards() {
        let mut env = TradingEnv::new(config(1000.0, Preset::Baseline), data(flat_panel(1, 40, 10.0))).unwrap();
        env.reset();
        assert_eq!(env.step(&[0.0]).unwrap().reward, 0.0);

        // hold 10 shares while the price rises by 1
        let mut env = TradingEnv::new(config(1000.0, Preset::Baseline), data(ramp_panel(1, 40, 10.0, 1.0))).unwrap();
        env.reset();
        env.step(&[0.1]).unwrap();
        let r = env.step(&[0.0]).unwrap();
        assert_eq!(env.portfolio().holdings, vec![10]);
        assert!((r.reward - 10.0).abs() < 1e-9);

        // pure commission
        let mut cfg = config(1000.0, Preset::Baseline);
        cfg.d_buy = 0.01;
        let mut env = TradingEnv::new(cfg, data(flat_panel(1, 40, 10.0))).unwrap();
        env.reset();
        let r = env.step(&[0.1]).unwrap();
        assert!((r.reward + 1.0).abs() < 1e-12);
        assert!((r.info.commission - 1.0).abs() < 1e-12);
    }

    #[test]
    fn episode_runs_to_done() {
        let d = data(flat_panel(2, 40, 10.0));
        let mut env = TradingEnv::new(config(1000.0, Preset::Baseline), d.clone()).unwrap();
        env.reset();
        let mut steps = 0;
        loop {
            steps += 1;
            if env.step(&[0.5, -0.5]).unwrap().done {
                break;
            }
        }
        assert_eq!(steps, 40 - 26 - 1);
        assert_eq!(steps, d.episode_len());
        assert!(matches!(env.step(&[0.0, 0.0]), Err(EnvError::EpisodeDone)));
        env.reset();
        assert!(matches!(env.step(&[0.0]), Err(EnvError::ActionShape { .. })));
    }

    #[test]
    fn no_sell_drops_sell_orders() {
        let mut cfg = config(1000.0, Preset::Baseline);
        cfg.no_sell = true;
        let mut env = TradingEnv::new(cfg, data(flat_panel(1, 40, 10.0))).unwrap();
        env.reset();
        env.step(&[0.05]).unwrap();
        let r = env.step(&[-1.0]).unwrap();
        assert_eq!(r.info.executed, vec![0]);
        assert_eq!(env.portfolio().holdings, vec![5]);
    }

    #[test]
    fn rejects_bad_config_and_short_panel() {
        let mut cfg = config(0.0, Preset::Baseline);
        assert!(TradingEnv::new(cfg.clone(), data(flat_panel(1, 40, 10.0))).is_err());
        cfg.initial_capital = 10.0;
        cfg.d_buy = 1.0;
        assert!(TradingEnv::new(cfg, data(flat_panel(1, 40, 10.0))).is_err());
        assert!(MarketData::build(flat_panel(1, 27, 10.0), None, 20, PriceField::Close).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let mut env = TradingEnv::new(config(1000.0, Preset::Baseline), data(flat_panel(1, 30, 10.0))).unwrap();
        env.reset();
        let info = env.step(&[0.1]).unwrap().info;
        let mut buf = Vec::new();
        write_trace(&mut buf, &["A".into()], &[info]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("date,V_t,reward,cash,commission,holdings_A,executed_A"));
        assert_eq!(lines.next(), Some("2010-02-09,1000,0,900,0,10,10"));
    }
}
