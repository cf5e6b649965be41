//! The ten per-asset technical indicators fed into the observation.
//!
//! Every function works on one asset's full history and returns a series of
//! the same length. Entries before an indicator's first valid index are
//! `NaN`; [`compute_block`] masks a common warm-up prefix so the trading
//! environment never reads them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{AlignedPanel, PriceField};

pub const MACD_FAST: usize = 12;
pub const MACD_SLOW: usize = 26;
pub const NUM_INDICATORS: usize = 10;

/// Column names in observation order.
pub const INDICATOR_NAMES: [&str; NUM_INDICATORS] =
    ["rsi", "sma", "ema", "stoch_k", "macd", "ad", "obv", "roc", "williams_r", "disparity"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndicatorError {
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("series of length {len} is too short (need {need})")]
    TooShort { len: usize, need: usize },
    #[error("input series have different lengths")]
    LengthMismatch,
}

fn check(len: usize, need: usize, w: usize) -> Result<(), IndicatorError> {
    if w == 0 {
        return Err(IndicatorError::ZeroWindow);
    }
    if len < need {
        return Err(IndicatorError::TooShort { len, need });
    }
    Ok(())
}

/// Simple moving average; valid from `w - 1`.
pub fn sma(close: &[f64], w: usize) -> Result<Vec<f64>, IndicatorError> {
    check(close.len(), w, w)?;
    let mut out = vec![f64::NAN; close.len()];
    // a fresh sum per window keeps values exact for the oracle comparison
    for t in (w - 1)..close.len() {
        out[t] = close[t + 1 - w..=t].iter().sum::<f64>() / w as f64;
    }
    Ok(out)
}

/// Exponential moving average with `k = 2/(w+1)`, seeded by the SMA of the first `w` values.
pub fn ema(close: &[f64], w: usize) -> Result<Vec<f64>, IndicatorError> {
    check(close.len(), w, w)?;
    let k = 2.0 / (w as f64 + 1.0);
    let mut out = vec![f64::NAN; close.len()];
    let mut prev = close[..w].iter().sum::<f64>() / w as f64;
    out[w - 1] = prev;
    for t in w..close.len() {
        prev = k * close[t] + (1.0 - k) * prev;
        out[t] = prev;
    }
    Ok(out)
}

fn rsi_value(avg_gain: f64, avg_loss: f64) -> f64 {
    match (avg_gain == 0.0, avg_loss == 0.0) {
        (true, true) => 50.0,
        (_, true) => 100.0,
        (true, _) => 0.0,
        _ => 100.0 - 100.0 / (1.0 + avg_gain / avg_loss),
    }
}

/// Wilder RSI; valid from `w`.
pub fn rsi(close: &[f64], w: usize) -> Result<Vec<f64>, IndicatorError> {
    check(close.len(), w + 1, w)?;
    let mut out = vec![f64::NAN; close.len()];
    let (mut gain, mut loss) = (0.0, 0.0);
    for t in 1..=w {
        let change = close[t] - close[t - 1];
        gain += change.max(0.0);
        loss += (-change).max(0.0);
    }
    let wf = w as f64;
    gain /= wf;
    loss /= wf;
    out[w] = rsi_value(gain, loss);
    for t in (w + 1)..close.len() {
        let change = close[t] - close[t - 1];
        gain = (gain * (wf - 1.0) + change.max(0.0)) / wf;
        loss = (loss * (wf - 1.0) + (-change).max(0.0)) / wf;
        out[t] = rsi_value(gain, loss);
    }
    Ok(out)
}

/// Highest high and lowest low over the trailing window ending at `t`.
fn window_range(high: &[f64], low: &[f64], t: usize, w: usize) -> (f64, f64) {
    let lo = t + 1 - w;
    let hh = high[lo..=t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ll = low[lo..=t].iter().copied().fold(f64::INFINITY, f64::min);
    (hh, ll)
}

fn same_len(a: &[f64], b: &[f64], c: &[f64]) -> Result<(), IndicatorError> {
    if a.len() != b.len() || a.len() != c.len() {
        return Err(IndicatorError::LengthMismatch);
    }
    Ok(())
}

/// Stochastic %K; a flat window yields 50.
pub fn stochastic_k(high: &[f64], low: &[f64], close: &[f64], w: usize) -> Result<Vec<f64>, IndicatorError> {
    same_len(high, low, close)?;
    check(close.len(), w, w)?;
    let mut out = vec![f64::NAN; close.len()];
    for t in (w - 1)..close.len() {
        let (hh, ll) = window_range(high, low, t, w);
        out[t] = if hh == ll { 50.0 } else { 100.0 * ((close[t] - ll) / (hh - ll)) };
    }
    Ok(out)
}

/// Williams %R; a flat window yields -50.
pub fn williams_r(high: &[f64], low: &[f64], close: &[f64], w: usize) -> Result<Vec<f64>, IndicatorError> {
    same_len(high, low, close)?;
    check(close.len(), w, w)?;
    let mut out = vec![f64::NAN; close.len()];
    for t in (w - 1)..close.len() {
        let (hh, ll) = window_range(high, low, t, w);
        out[t] = if hh == ll { -50.0 } else { -100.0 * ((hh - close[t]) / (hh - ll)) };
    }
    Ok(out)
}

/// EMA(12) minus EMA(26); valid from index 25.
pub fn macd(close: &[f64]) -> Result<Vec<f64>, IndicatorError> {
    check(close.len(), MACD_SLOW, MACD_SLOW)?;
    let fast = ema(close, MACD_FAST)?;
    let slow = ema(close, MACD_SLOW)?;
    Ok(fast.iter().zip(&slow).map(|(f, s)| f - s).collect())
}

/// Accumulation/distribution line. Bars with `high == low` contribute nothing.
pub fn ad_oscillator(high: &[f64], low: &[f64], close: &[f64], volume: &[f64]) -> Result<Vec<f64>, IndicatorError> {
    same_len(high, low, close)?;
    if volume.len() != close.len() {
        return Err(IndicatorError::LengthMismatch);
    }
    let mut acc = 0.0;
    Ok((0..close.len())
        .map(|t| {
            let range = high[t] - low[t];
            let m = if range == 0.0 { 0.0 } else { ((close[t] - low[t]) - (high[t] - close[t])) / range };
            acc += m * volume[t];
            acc
        })
        .collect())
}

/// On-balance volume, starting at 0.
pub fn obv(close: &[f64], volume: &[f64]) -> Result<Vec<f64>, IndicatorError> {
    if volume.len() != close.len() {
        return Err(IndicatorError::LengthMismatch);
    }
    let mut out = Vec::with_capacity(close.len());
    let mut acc = 0.0;
    for t in 0..close.len() {
        if t > 0 {
            let diff = close[t] - close[t - 1];
            if diff > 0.0 {
                acc += volume[t];
            } else if diff < 0.0 {
                acc -= volume[t];
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Percent rate of change over `w` bars; valid from `w`.
pub fn roc(close: &[f64], w: usize) -> Result<Vec<f64>, IndicatorError> {
    check(close.len(), w + 1, w)?;
    let mut out = vec![f64::NAN; close.len()];
    for t in w..close.len() {
        out[t] = 100.0 * (close[t] - close[t - w]) / close[t - w];
    }
    Ok(out)
}

/// Close as a percentage of its EMA.
pub fn disparity(close: &[f64], w: usize) -> Result<Vec<f64>, IndicatorError> {
    let e = ema(close, w)?;
    Ok(close.iter().zip(&e).map(|(c, m)| 100.0 * c / m).collect())
}

/// Index of the first row where every indicator is defined.
pub fn warmup(w: usize) -> usize {
    MACD_SLOW.max(w + 1)
}

/// JSON has no NaN; masked entries travel as `null`.
mod masked {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opts: Vec<Option<f64>> = values.iter().map(|v| (!v.is_nan()).then_some(*v)).collect();
        opts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opts = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opts.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }
}

/// All ten indicators for one asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorBlock {
    #[serde(with = "masked")]
    pub rsi: Vec<f64>,
    #[serde(with = "masked")]
    pub sma: Vec<f64>,
    #[serde(with = "masked")]
    pub ema: Vec<f64>,
    #[serde(with = "masked")]
    pub stoch_k: Vec<f64>,
    #[serde(with = "masked")]
    pub macd: Vec<f64>,
    #[serde(with = "masked")]
    pub ad: Vec<f64>,
    #[serde(with = "masked")]
    pub obv: Vec<f64>,
    #[serde(with = "masked")]
    pub roc: Vec<f64>,
    #[serde(with = "masked")]
    pub williams_r: Vec<f64>,
    #[serde(with = "masked")]
    pub disparity: Vec<f64>,
    /// Rows before this index are invalid.
    pub warmup: usize,
}

impl IndicatorBlock {
    /// Computes every indicator from per-bar OHLCV columns.
    pub fn compute(
        high: &[f64],
        low: &[f64],
        close: &[f64],
        volume: &[f64],
        w: usize,
    ) -> Result<Self, IndicatorError> {
        let warm = warmup(w);
        if close.len() <= warm {
            return Err(IndicatorError::TooShort { len: close.len(), need: warm + 1 });
        }
        let masked = |mut s: Vec<f64>| {
            s[..warm].fill(f64::NAN);
            s
        };
        Ok(Self {
            rsi: masked(rsi(close, w)?),
            sma: masked(sma(close, w)?),
            ema: masked(ema(close, w)?),
            stoch_k: masked(stochastic_k(high, low, close, w)?),
            macd: masked(macd(close)?),
            ad: masked(ad_oscillator(high, low, close, volume)?),
            obv: masked(obv(close, volume)?),
            roc: masked(roc(close, w)?),
            williams_r: masked(williams_r(high, low, close, w)?),
            disparity: masked(disparity(close, w)?),
            warmup: warm,
        })
    }

    pub fn len(&self) -> usize {
        self.rsi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rsi.is_empty()
    }

    pub fn series(&self) -> [&[f64]; NUM_INDICATORS] {
        [
            &self.rsi,
            &self.sma,
            &self.ema,
            &self.stoch_k,
            &self.macd,
            &self.ad,
            &self.obv,
            &self.roc,
            &self.williams_r,
            &self.disparity,
        ]
    }

    /// The ten values at `t`, in [`INDICATOR_NAMES`] order.
    pub fn row(&self, t: usize) -> [f64; NUM_INDICATORS] {
        self.series().map(|s| s[t])
    }
}

/// OHLCV columns of one asset, with high/low/open rescaled onto the
/// adjusted-close basis when `field` is [`PriceField::AdjClose`].
pub struct PriceColumns {
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub volume: Vec<f64>,
}

impl PriceColumns {
    pub fn from_panel(panel: &AlignedPanel, asset: usize, field: PriceField) -> Self {
        let bars = &panel.bars[asset];
        let factor = |b: &crate::market_data::Bar| match field {
            PriceField::Close => 1.0,
            PriceField::AdjClose => b.adj_close / b.close,
        };
        Self {
            high: bars.iter().map(|b| b.high * factor(b)).collect(),
            low: bars.iter().map(|b| b.low * factor(b)).collect(),
            close: (0..bars.len()).map(|t| panel.price(asset, t, field)).collect(),
            volume: bars.iter().map(|b| b.volume).collect(),
        }
    }
}

/// One [`IndicatorBlock`] per asset of the panel.
pub fn compute_block(panel: &AlignedPanel, w: usize, field: PriceField) -> Result<Vec<IndicatorBlock>, IndicatorError> {
    (0..panel.num_assets())
        .map(|i| {
            let c = PriceColumns::from_panel(panel, i, field);
            IndicatorBlock::compute(&c.high, &c.low, &c.close, &c.volume, w)
        })
        .collect()
}
