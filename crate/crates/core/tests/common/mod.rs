//! Independent reference implementations and checks shared by the
//! integration tests and the acceptance runner.

#![allow(dead_code)]

use std::sync::Arc;

use deeptrader::env::{EnvConfig, MarketData, Preset, TradingEnv};
use deeptrader::market_data::{AlignedPanel, PriceField};
use deeptrader::neural::{Activation, Matrix, Mlp};
use deeptrader::synthetic::random_walk_panel;
use deeptrader::td3::{actor_loss_grad, critic_loss_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - b|` relative to `max(|b|, 1)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub struct Ohlcv {
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub volume: Vec<f64>,
}

/// Random walk with repeated closes, flat bars and closes pinned to the
/// bar's high or low sprinkled in.
pub fn random_ohlcv(r: &mut ChaCha8Rng, len: usize) -> Ohlcv {
    let mut close = Vec::with_capacity(len);
    let mut high = Vec::with_capacity(len);
    let mut low = Vec::with_capacity(len);
    let mut c: f64 = r.random_range(5.0..500.0);
    for _ in 0..len {
        if !r.random_bool(0.1) {
            c *= 1.0 + r.random_range(-0.05..0.05);
        }
        let (h, l) = match r.random_range(0..10) {
            0 => (c, c),
            1 => (c, c * (1.0 - r.random_range(0.0..0.03))),
            2 => (c * (1.0 + r.random_range(0.0..0.03)), c),
            _ => (c * (1.0 + r.random_range(0.0..0.03)), c * (1.0 - r.random_range(0.0..0.03))),
        };
        close.push(c);
        high.push(h);
        low.push(l);
    }
    let volume = (0..len).map(|_| r.random_range(1e3..1e6_f64).round()).collect();
    Ohlcv { high, low, close, volume }
}

/// Brute-force references; `None` where an indicator is undefined.
pub mod oracle {
    pub fn sma(c: &[f64], w: usize) -> Vec<Option<f64>> {
        (0..c.len())
            .map(|t| {
                if t + 1 < w {
                    return None;
                }
                let mut s = 0.0;
                for v in &c[t + 1 - w..=t] {
                    s += v;
                }
                Some(s / w as f64)
            })
            .collect()
    }

    /// Closed-form expansion of the seeded recursion.
    pub fn ema(c: &[f64], w: usize) -> Vec<Option<f64>> {
        let k = 2.0 / (w as f64 + 1.0);
        let seed = c[..w].iter().sum::<f64>() / w as f64;
        (0..c.len())
            .map(|t| {
                if t + 1 < w {
                    return None;
                }
                let mut v = (1.0 - k).powi((t + 1 - w) as i32) * seed;
                for j in w..=t {
                    v += k * (1.0 - k).powi((t - j) as i32) * c[j];
                }
                Some(v)
            })
            .collect()
    }

    fn wilder(x: &[f64], w: usize, t: usize) -> f64 {
        // x[j] is the change into bar j; x[0] unused
        let a = (w as f64 - 1.0) / w as f64;
        let seed = x[1..=w].iter().sum::<f64>() / w as f64;
        let mut v = a.powi((t - w) as i32) * seed;
        for j in (w + 1)..=t {
            v += a.powi((t - j) as i32) * x[j] / w as f64;
        }
        v
    }

    pub fn rsi(c: &[f64], w: usize) -> Vec<Option<f64>> {
        let mut gains = vec![0.0];
        let mut losses = vec![0.0];
        for t in 1..c.len() {
            let d = c[t] - c[t - 1];
            gains.push(if d > 0.0 { d } else { 0.0 });
            losses.push(if d < 0.0 { -d } else { 0.0 });
        }
        (0..c.len())
            .map(|t| {
                if t < w {
                    return None;
                }
                let g = wilder(&gains, w, t);
                let l = wilder(&losses, w, t);
                Some(if g == 0.0 && l == 0.0 {
                    50.0
                } else if l == 0.0 {
                    100.0
                } else {
                    100.0 * g / (g + l)
                })
            })
            .collect()
    }

    fn extremes(high: &[f64], low: &[f64], t: usize, w: usize) -> (f64, f64) {
        let mut hh = high[t];
        let mut ll = low[t];
        for j in (t + 1 - w)..=t {
            if high[j] > hh {
                hh = high[j];
            }
            if low[j] < ll {
                ll = low[j];
            }
        }
        (hh, ll)
    }

    pub fn stoch_k(high: &[f64], low: &[f64], c: &[f64], w: usize) -> Vec<Option<f64>> {
        (0..c.len())
            .map(|t| {
                (t + 1 >= w).then(|| {
                    let (hh, ll) = extremes(high, low, t, w);
                    if hh == ll { 50.0 } else { 100.0 * (c[t] - ll) / (hh - ll) }
                })
            })
            .collect()
    }

    pub fn williams_r(high: &[f64], low: &[f64], c: &[f64], w: usize) -> Vec<Option<f64>> {
        (0..c.len())
            .map(|t| {
                (t + 1 >= w).then(|| {
                    let (hh, ll) = extremes(high, low, t, w);
                    if hh == ll { -50.0 } else { -100.0 * (hh - c[t]) / (hh - ll) }
                })
            })
            .collect()
    }

    pub fn macd(c: &[f64]) -> Vec<Option<f64>> {
        let fast = ema(c, 12);
        let slow = ema(c, 26);
        fast.iter().zip(&slow).map(|(f, s)| Some((*f)? - (*s)?)).collect()
    }

    pub fn ad(high: &[f64], low: &[f64], c: &[f64], v: &[f64]) -> Vec<Option<f64>> {
        (0..c.len())
            .map(|t| {
                let mut s = 0.0;
                for j in 0..=t {
                    if high[j] != low[j] {
                        s += v[j] * (2.0 * c[j] - high[j] - low[j]) / (high[j] - low[j]);
                    }
                }
                Some(s)
            })
            .collect()
    }

    pub fn obv(c: &[f64], v: &[f64]) -> Vec<Option<f64>> {
        (0..c.len())
            .map(|t| {
                let mut s = 0.0;
                for j in 1..=t {
                    s += v[j] * (c[j] - c[j - 1]).signum() * f64::from(c[j] != c[j - 1]);
                }
                Some(s)
            })
            .collect()
    }

    pub fn roc(c: &[f64], w: usize) -> Vec<Option<f64>> {
        (0..c.len()).map(|t| (t >= w).then(|| (c[t] / c[t - w] - 1.0) * 100.0)).collect()
    }

    pub fn disparity(c: &[f64], w: usize) -> Vec<Option<f64>> {
        ema(c, w).iter().zip(c).map(|(e, c)| e.map(|e| c / e * 100.0)).collect()
    }
}

/// Largest relative error between an implementation and its oracle; `None`
/// when the masks differ.
pub fn compare(got: &[f64], want: &[Option<f64>]) -> Option<f64> {
    if got.len() != want.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (g, w) in got.iter().zip(want) {
        match w {
            None if g.is_nan() => {}
            Some(w) if g.is_finite() => worst = worst.max(rel_err(*g, *w)),
            _ => return None,
        }
    }
    Some(worst)
}

/// All ten indicators of one series against their oracles at window `w`.
/// Returns the worst relative error, or a description of the first mismatch.
pub fn indicator_series_error(s: &Ohlcv, w: usize) -> Result<f64, String> {
    use deeptrader::indicators as ind;
    let (h, l, c, v) = (&s.high, &s.low, &s.close, &s.volume);
    let checks: [(&str, Vec<f64>, Vec<Option<f64>>); 10] = [
        ("rsi", ind::rsi(c, w).unwrap(), oracle::rsi(c, w)),
        ("sma", ind::sma(c, w).unwrap(), oracle::sma(c, w)),
        ("ema", ind::ema(c, w).unwrap(), oracle::ema(c, w)),
        ("stoch_k", ind::stochastic_k(h, l, c, w).unwrap(), oracle::stoch_k(h, l, c, w)),
        ("macd", ind::macd(c).unwrap(), oracle::macd(c)),
        ("ad", ind::ad_oscillator(h, l, c, v).unwrap(), oracle::ad(h, l, c, v)),
        ("obv", ind::obv(c, v).unwrap(), oracle::obv(c, v)),
        ("roc", ind::roc(c, w).unwrap(), oracle::roc(c, w)),
        ("williams_r", ind::williams_r(h, l, c, w).unwrap(), oracle::williams_r(h, l, c, w)),
        ("disparity", ind::disparity(c, w).unwrap(), oracle::disparity(c, w)),
    ];
    let mut worst: f64 = 0.0;
    for (name, got, want) in &checks {
        match compare(got, want) {
            Some(e) => worst = worst.max(e),
            None => return Err(format!("{name}: mask mismatch at w={w}")),
        }
    }
    let block = ind::IndicatorBlock::compute(h, l, c, v, w).unwrap();
    for (t, row) in (0..c.len()).map(|t| (t, block.row(t))) {
        let masked = t < ind::warmup(w);
        for (k, x) in row.iter().enumerate() {
            if masked != x.is_nan() {
                return Err(format!("block {}: mask wrong at t={t}", ind::INDICATOR_NAMES[k]));
            }
            if !masked && *x != checks[k].1[t] {
                return Err(format!("block {} differs from the direct call at t={t}", ind::INDICATOR_NAMES[k]));
            }
        }
    }
    Ok(worst)
}

/// Pointwise `%K = 100 + %R`; returns the worst absolute deviation.
pub fn k_r_identity_error(s: &Ohlcv, w: usize) -> f64 {
    use deeptrader::indicators as ind;
    let k = ind::stochastic_k(&s.high, &s.low, &s.close, w).unwrap();
    let r = ind::williams_r(&s.high, &s.low, &s.close, w).unwrap();
    k.iter()
        .zip(&r)
        .filter(|(k, _)| !k.is_nan())
        .map(|(k, r)| (k - (100.0 + r)).abs())
        .fold(0.0, f64::max)
}

/// Flat gradient vs central differences: `|g - n| / max(|g| + |n|, 1e-12)`
/// on the Euclidean norms.
fn relative_gap(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-12)
}

fn central_differences(net: &Mlp, eps: f64, mut loss: impl FnMut(&Mlp) -> f64) -> Vec<f64> {
    let base = net.params();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + eps;
            probe.set_params(&p).unwrap();
            let up = loss(&probe);
            p[i] = base[i] - eps;
            probe.set_params(&p).unwrap();
            let down = loss(&probe);
            (up - down) / (2.0 * eps)
        })
        .collect()
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix { rows, cols, data: (0..rows * cols).map(|_| r.random_range(-2.0..2.0)).collect() }
}

struct Draw {
    actor: Mlp,
    critic: Mlp,
    states: Matrix,
    actions: Matrix,
    targets: Vec<f64>,
}

fn draw(seed: u64) -> Draw {
    let mut r = rng(seed);
    let obs = r.random_range(1..7);
    let act = r.random_range(1..4);
    let hidden = [r.random_range(2..10), r.random_range(2..10)];
    let batch = r.random_range(1..9);
    let actor = Mlp::new(&[obs, hidden[0], hidden[1], act], Activation::Relu, Activation::Tanh, &mut r);
    let critic = Mlp::new(&[obs + act, hidden[0], hidden[1], 1], Activation::Relu, Activation::Identity, &mut r);
    let states = random_matrix(&mut r, batch, obs);
    let actions = Matrix { rows: batch, cols: act, data: (0..batch * act).map(|_| r.random_range(-1.0..1.0)).collect() };
    let targets = (0..batch).map(|_| r.random_range(-3.0..3.0)).collect();
    Draw { actor, critic, states, actions, targets }
}

/// Smallest `|pre-activation|` over the ReLU units of `net` on `x`.
pub fn relu_margin(net: &Mlp, x: &Matrix) -> f64 {
    let mut margin = f64::INFINITY;
    let mut cur = x.clone();
    for layer in &net.layers {
        let mut next = Matrix { rows: cur.rows, cols: layer.outputs, data: Vec::with_capacity(cur.rows * layer.outputs) };
        for r in 0..cur.rows {
            for o in 0..layer.outputs {
                let mut z = layer.bias[o];
                for i in 0..layer.inputs {
                    z += layer.weights[o * layer.inputs + i] * cur.data[r * cur.cols + i];
                }
                let y = match layer.activation {
                    Activation::Relu => {
                        margin = margin.min(z.abs());
                        z.max(0.0)
                    }
                    Activation::Tanh => z.tanh(),
                    Activation::Identity => z,
                };
                next.data.push(y);
            }
        }
        cur = next;
    }
    margin
}

pub const FD_EPS: f64 = 1e-5;

/// Draws whose ReLU pre-activations come this close to zero are treated as
/// non-differentiable: the finite-difference probe would straddle the kink.
pub const KINK_MARGIN: f64 = 1e-3;

/// Critic squared-error gradient against central differences for draw
/// `seed`; `None` when the draw sits on a ReLU kink.
pub fn critic_gradient_gap(seed: u64) -> Option<f64> {
    let d = draw(seed);
    let input = d.states.hcat(&d.actions);
    if relu_margin(&d.critic, &input) < KINK_MARGIN {
        return None;
    }
    let (_, g) = critic_loss_grad(&d.critic, &input, &d.targets).unwrap();
    let numeric = central_differences(&d.critic, FD_EPS, |net| {
        let q = net.forward(&input).unwrap().data;
        q.iter().zip(&d.targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / q.len() as f64
    });
    Some(relative_gap(&g.flat(), &numeric))
}

/// Actor `-mean Q(s, actor(s))` gradient against central differences for
/// draw `seed`; `None` when the draw sits on a ReLU kink.
pub fn actor_gradient_gap(seed: u64) -> Option<f64> {
    let d = draw(seed);
    let a = d.actor.forward(&d.states).unwrap();
    if relu_margin(&d.actor, &d.states) < KINK_MARGIN || relu_margin(&d.critic, &d.states.hcat(&a)) < KINK_MARGIN {
        return None;
    }
    let (_, g) = actor_loss_grad(&d.actor, &d.critic, &d.states).unwrap();
    let numeric = central_differences(&d.actor, FD_EPS, |net| {
        let a = net.forward(&d.states).unwrap();
        let q = d.critic.forward(&d.states.hcat(&a)).unwrap().data;
        -q.iter().sum::<f64>() / q.len() as f64
    });
    Some(relative_gap(&g.flat(), &numeric))
}

/// Worst gap over the first `n` differentiable draws from `first_seed` on,
/// and how many draws were skipped as kinks.
pub fn worst_gradient_gap(gap: fn(u64) -> Option<f64>, first_seed: u64, n: usize) -> (f64, usize) {
    let (mut worst, mut taken, mut skipped) = (0.0f64, 0, 0);
    let mut seed = first_seed;
    while taken < n {
        match gap(seed) {
            Some(g) => {
                worst = worst.max(g);
                taken += 1;
            }
            None => skipped += 1,
        }
        seed += 1;
    }
    (worst, skipped)
}

/// Random trading setup for fuzzing.
pub fn random_env(r: &mut ChaCha8Rng) -> TradingEnv {
    let n = r.random_range(1..5);
    let len = r.random_range(30..90);
    let lookback = r.random_range(1..25);
    let panel = random_walk_panel(n, len, r.random());
    let preset = [Preset::Baseline, Preset::Tech, Preset::Full][r.random_range(0..3)];
    let config = EnvConfig {
        initial_capital: 10f64.powf(r.random_range(2.0..6.0)),
        k_max: r.random_range(1..300),
        d_buy: r.random_range(0.0..0.05),
        d_sell: r.random_range(0.0..0.05),
        lookback,
        preset,
        price_field: PriceField::AdjClose,
        no_sell: r.random_bool(0.2),
    };
    env_on(panel, config)
}

pub fn env_on(panel: AlignedPanel, config: EnvConfig) -> TradingEnv {
    let data = MarketData::build(panel, None, config.lookback, config.price_field).unwrap();
    TradingEnv::new(config, Arc::new(data)).unwrap()
}

/// Raw action with occasional out-of-range and non-finite entries.
pub fn fuzz_action(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match r.random_range(0..20) {
            0 => f64::NAN,
            1 => f64::INFINITY,
            2 => f64::NEG_INFINITY,
            3 => r.random_range(-1e6..1e6),
            4 => 1.0,
            5 => -1.0,
            _ => r.random_range(-1.0..1.0),
        })
        .collect()
}

/// Profit of buying `K_max` shares at every trough (`t % period == 0`) of the
/// episode and selling them `period - 1` bars later at the peak; a position
/// still open after the last decision is marked at the final close.
pub fn sawtooth_oracle_profit(start: usize, last_decision: usize, period: usize, amplitude: f64, base: f64, k_max: u32) -> f64 {
    let price = |t: usize| deeptrader::synthetic::sawtooth_price(t, period, amplitude, base);
    (start..=last_decision)
        .filter(|t| t % period == 0)
        .map(|t| f64::from(k_max) * (price((t + period - 1).min(last_decision + 1)) - price(t)))
        .sum()
}
