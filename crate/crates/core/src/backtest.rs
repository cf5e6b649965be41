//! Episode driver, performance metrics and multi-seed aggregation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, MarketData, Preset, StepInfo, TradingEnv};
use crate::replay::Transition;
use crate::td3::{AgentError, Td3Agent, Td3Config, TrainDiagnostics};

/// Trading days per year used to annualize the Sharpe ratio.
pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("no seeds given")]
    NoSeeds,
    #[error("worker thread panicked")]
    Worker,
}

/// Anything that can drive the environment.
pub trait Agent {
    fn act(&mut self, observation: &[f64], explore: bool) -> Vec<f64>;

    /// Receives a transition with the reward already normalized.
    fn learn(&mut self, _transition: Transition) -> Result<Option<TrainDiagnostics>, AgentError> {
        Ok(None)
    }
}

impl Agent for Td3Agent {
    fn act(&mut self, observation: &[f64], explore: bool) -> Vec<f64> {
        Td3Agent::act(self, observation, explore)
    }

    fn learn(&mut self, transition: Transition) -> Result<Option<TrainDiagnostics>, AgentError> {
        self.train_step(transition).map(Some)
    }
}

/// Uniform actions in `[-1, 1]`.
pub struct RandomAgent {
    rng: ChaCha8Rng,
    dim: usize,
}

impl RandomAgent {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), dim }
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _: &[f64], _: bool) -> Vec<f64> {
        (0..self.dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect()
    }
}

/// Sends the same action every step.
pub struct ConstantAgent(pub Vec<f64>);

impl Agent for ConstantAgent {
    fn act(&mut self, _: &[f64], _: bool) -> Vec<f64> {
        self.0.clone()
    }
}

/// Wraps a closure of the observation.
pub struct FnAgent<F>(pub F);

impl<F: FnMut(&[f64]) -> Vec<f64>> Agent for FnAgent<F> {
    fn act(&mut self, observation: &[f64], _: bool) -> Vec<f64> {
        (self.0)(observation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunMode {
    pub learn: bool,
    pub explore: bool,
}

impl RunMode {
    pub const TRAIN: RunMode = RunMode { learn: true, explore: true };
    pub const EVAL: RunMode = RunMode { learn: false, explore: false };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub initial_value: f64,
    /// Sum of un-normalized rewards.
    pub total_reward: f64,
    pub final_value: f64,
    /// `None` when the return series has zero variance or is too short.
    pub sharpe: Option<f64>,
    pub commission_total: f64,
    /// Portfolio value before the first step and after every step.
    pub values: Vec<f64>,
    pub final_holdings: Vec<i64>,
    #[serde(skip)]
    pub trace: Vec<StepInfo>,
}

/// Annualized Sharpe ratio of daily simple returns with a zero risk-free rate.
pub fn sharpe_ratio(values: &[f64]) -> Option<f64> {
    if values.len() < 3 {
        return None;
    }
    let returns: Vec<f64> = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    // geometric series round to tiny nonzero spreads
    if !sd.is_finite() || sd < 1e-12 {
        return None;
    }
    Some(mean / sd * TRADING_DAYS.sqrt())
}

/// Runs `env` from a fresh reset until done.
pub fn run_episode<A: Agent + ?Sized>(env: &mut TradingEnv, agent: &mut A, mode: RunMode) -> Result<EpisodeStats, BacktestError> {
    let scale = env.config().initial_capital;
    let mut obs = env.reset();
    let initial_value = env.value();
    let mut values = vec![initial_value];
    let mut trace = Vec::new();
    let (mut total_reward, mut commission_total) = (0.0, 0.0);
    loop {
        let action = agent.act(&obs, mode.explore);
        let step = env.step(&action)?;
        total_reward += step.reward;
        commission_total += step.info.commission;
        values.push(step.info.value);
        if mode.learn {
            agent.learn(Transition {
                state: obs,
                action: action.iter().map(|a| a.clamp(-1.0, 1.0)).collect(),
                reward: step.reward / scale,
                next_state: step.observation.clone(),
                done: step.done,
            })?;
        }
        trace.push(step.info);
        obs = step.observation;
        if step.done {
            break;
        }
    }
    Ok(EpisodeStats {
        initial_value,
        total_reward,
        final_value: *values.last().expect("at least one value"),
        sharpe: sharpe_ratio(&values),
        commission_total,
        values,
        final_holdings: env.portfolio().holdings.clone(),
        trace,
    })
}

/// Mean with standard error `s / sqrt(n)` (sample deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// `None` with fewer than two values.
    pub stderr: Option<f64>,
    pub values: Vec<f64>,
}

impl MetricSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        // shifted by the first value so identical runs give exactly zero spread
        let mean = match values.first() {
            Some(&x0) => x0 + values.iter().map(|v| v - x0).sum::<f64>() / n,
            None => f64::NAN,
        };
        let stderr = (values.len() >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self { mean, stderr, values }
    }

    fn cell(&self, decimals: usize) -> String {
        if self.values.is_empty() {
            return "n/a".into();
        }
        match self.stderr {
            Some(se) => format!("{:.*} ± {:.*}", decimals, self.mean, decimals, se),
            None => format!("{:.*}", decimals, self.mean),
        }
    }
}

/// Per-metric statistics across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub runs: usize,
    pub total_return: MetricSummary,
    /// Over runs whose Sharpe ratio is defined.
    pub sharpe: MetricSummary,
    pub commission: MetricSummary,
}

impl SeedAggregate {
    pub fn from_stats<'a>(stats: impl IntoIterator<Item = &'a EpisodeStats>) -> Self {
        let stats: Vec<&EpisodeStats> = stats.into_iter().collect();
        Self {
            runs: stats.len(),
            total_return: MetricSummary::from_values(stats.iter().map(|s| s.total_reward).collect()),
            sharpe: MetricSummary::from_values(stats.iter().filter_map(|s| s.sharpe).collect()),
            commission: MetricSummary::from_values(stats.iter().map(|s| s.commission_total).collect()),
        }
    }
}

type Row = (&'static str, fn(&SeedAggregate) -> String);

/// Rows "Accumulated Return", "Sharpe Ratio", "Commission"; one column per named aggregate.
pub fn comparison_table(columns: &[(String, SeedAggregate)]) -> String {
    let rows: [Row; 3] = [
        ("Accumulated Return", |a| a.total_return.cell(2)),
        ("Sharpe Ratio", |a| a.sharpe.cell(3)),
        ("Commission", |a| a.commission.cell(2)),
    ];
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("Evaluation Environment".to_string())
        .chain(columns.iter().map(|(n, _)| n.clone()))
        .collect()];
    for (label, f) in rows {
        cells.push(std::iter::once(label.to_string()).chain(columns.iter().map(|(_, a)| f(a))).collect());
    }
    let widths: Vec<usize> =
        (0..cells[0].len()).map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
            out.push('\n');
        }
    }
    out
}

/// Training setup for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: Td3Config,
    pub episodes: usize,
}

/// One point of a learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub total_reward: f64,
    pub sharpe: Option<f64>,
    pub commission: f64,
    pub final_value: f64,
}

impl EpisodeSummary {
    fn new(episode: usize, s: &EpisodeStats) -> Self {
        Self {
            episode,
            total_reward: s.total_reward,
            sharpe: s.sharpe,
            commission: s.commission_total,
            final_value: s.final_value,
        }
    }
}

pub struct SeedRun {
    pub seed: u64,
    pub curve: Vec<EpisodeSummary>,
    /// Statistics of the last training episode.
    pub last: EpisodeStats,
    pub agent: Td3Agent,
}

/// Trains a fresh agent for `config.episodes` episodes.
pub fn train_seed(config: &ExperimentConfig, data: Arc<MarketData>, seed: u64) -> Result<SeedRun, BacktestError> {
    let mut env = TradingEnv::new(config.env.clone(), data)?;
    let agent_cfg = Td3Config { seed, ..config.agent.clone() };
    let mut agent = Td3Agent::new(env.observation_len(), env.num_assets(), agent_cfg)?;
    let mut curve = Vec::with_capacity(config.episodes);
    let mut last = None;
    for episode in 0..config.episodes.max(1) {
        let stats = run_episode(&mut env, &mut agent, RunMode::TRAIN)?;
        curve.push(EpisodeSummary::new(episode, &stats));
        last = Some(stats);
    }
    Ok(SeedRun { seed, curve, last: last.expect("at least one episode"), agent })
}

pub struct MultiSeed {
    pub runs: Vec<SeedRun>,
    /// Over the last training episode of each run.
    pub aggregate: SeedAggregate,
}

/// Independent training per seed, up to `jobs` at a time; results keep seed order.
pub fn multi_seed(
    config: &ExperimentConfig,
    data: Arc<MarketData>,
    seeds: &[u64],
    jobs: usize,
) -> Result<MultiSeed, BacktestError> {
    if seeds.is_empty() {
        return Err(BacktestError::NoSeeds);
    }
    let jobs = jobs.clamp(1, seeds.len());
    let mut runs = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(jobs) {
        let results: Vec<Result<SeedRun, BacktestError>> = std::thread::scope(|s| {
            let handles: Vec<_> =
                chunk.iter().map(|&seed| s.spawn({
                    let data = data.clone();
                    move || train_seed(config, data, seed)
                })).collect();
            handles.into_iter().map(|h| h.join().unwrap_or(Err(BacktestError::Worker))).collect()
        });
        for r in results {
            runs.push(r?);
        }
    }
    let aggregate = SeedAggregate::from_stats(runs.iter().map(|r| &r.last));
    Ok(MultiSeed { runs, aggregate })
}

/// One deterministic pass over `env` with exploration off. Observation
/// statistics stay frozen unless `learn_on_test`, in which case the agent
/// keeps training on the data it trades.
pub fn evaluate(agent: &mut Td3Agent, env: &mut TradingEnv, learn_on_test: bool) -> Result<EpisodeStats, BacktestError> {
    agent.set_normalizer_frozen(!learn_on_test);
    let mode = RunMode { learn: learn_on_test, explore: false };
    let stats = run_episode(env, agent, mode);
    agent.set_normalizer_frozen(false);
    stats
}

/// [`evaluate`] with every sell order dropped.
pub fn ablation_no_sell(
    agent: &mut Td3Agent,
    config: &EnvConfig,
    data: Arc<MarketData>,
) -> Result<EpisodeStats, BacktestError> {
    let mut env = TradingEnv::new(EnvConfig { no_sell: true, ..config.clone() }, data)?;
    evaluate(agent, &mut env, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub symbol: String,
    pub shares: i64,
    pub value: f64,
    /// Share of the invested (non-cash) value.
    pub weight: f64,
}

/// Final holdings valued at the last close.
pub fn allocation_table(stats: &EpisodeStats, symbols: &[String], last_prices: &[f64]) -> Vec<AllocationRow> {
    let values: Vec<f64> = stats.final_holdings.iter().zip(last_prices).map(|(&h, &p)| h as f64 * p).collect();
    let invested: f64 = values.iter().sum();
    symbols
        .iter()
        .zip(&stats.final_holdings)
        .zip(&values)
        .map(|((s, &shares), &value)| AllocationRow {
            symbol: s.clone(),
            shares,
            value,
            weight: if invested > 0.0 { value / invested } else { 0.0 },
        })
        .collect()
}

/// Evaluation summary with the final allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub preset: Preset,
    pub observation_len: usize,
    pub no_sell: bool,
    pub learn_on_test: bool,
    pub stats: EpisodeStats,
    pub allocation: Vec<AllocationRow>,
}

/// Runs [`evaluate`] on a fresh environment over `data`.
pub fn evaluation_report(
    agent: &mut Td3Agent,
    config: &EnvConfig,
    data: Arc<MarketData>,
    learn_on_test: bool,
) -> Result<EvaluationReport, BacktestError> {
    let mut env = TradingEnv::new(config.clone(), data)?;
    let stats = evaluate(agent, &mut env, learn_on_test)?;
    let allocation = allocation_table(&stats, &env.data().panel.symbols, &env.prices());
    Ok(EvaluationReport {
        preset: config.preset,
        observation_len: env.observation_len(),
        no_sell: config.no_sell,
        learn_on_test,
        stats,
        allocation,
    })
}

/// Two-column "Stock | Shares" table.
pub fn allocation_text(rows: &[AllocationRow]) -> String {
    let w = rows.iter().map(|r| r.symbol.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<w$} | Shares\n{}-+-------\n", "Stock", "-".repeat(w));
    for r in rows {
        out.push_str(&format!("{:<w$} | {}\n", r.symbol, r.shares));
    }
    out
}
