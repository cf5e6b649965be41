use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use deeptrader::backtest::{
    allocation_text, comparison_table, evaluation_report, multi_seed, EpisodeStats, EpisodeSummary, EvaluationReport,
    ExperimentConfig, SeedAggregate,
};
use deeptrader::env::{write_trace, EnvConfig, MarketData, Preset, TradingEnv};
use deeptrader::indicators::INDICATOR_NAMES;
use deeptrader::td3::{Td3Agent, Td3Config};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Classify, CliResult};
use crate::prepare::prepare;

#[derive(Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    /// One point per training episode.
    pub curve: Vec<EpisodeSummary>,
    pub last: EpisodeStats,
    /// Relative to the metrics file.
    pub checkpoint: PathBuf,
}

/// Contents of `metrics.json` written by `train`.
#[derive(Serialize, Deserialize)]
pub struct TrainMetrics {
    pub preset: Preset,
    pub observation_len: usize,
    pub symbols: Vec<String>,
    pub episodes: usize,
    pub cache_key: String,
    pub env: EnvConfig,
    pub agent: Td3Config,
    pub runs: Vec<SeedMetrics>,
    /// Over the last training episode of each seed.
    pub aggregate: SeedAggregate,
}

#[derive(Serialize, Deserialize)]
pub struct ReportColumn {
    pub name: String,
    pub observation_len: usize,
    pub aggregate: SeedAggregate,
}

#[derive(Serialize, Deserialize)]
pub struct Report {
    pub columns: Vec<ReportColumn>,
    pub table: String,
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).runtime()?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display())).runtime()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).runtime()?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn trace_csv(symbols: &[String], stats: &EpisodeStats) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    write_trace(&mut out, symbols, &stats.trace).runtime()?;
    Ok(out)
}

pub fn cmd_prepare(cfg: &RunConfig) -> CliResult<()> {
    let p = prepare(cfg)?;
    println!(
        "{} {} ({} assets, {} train / {} test bars)",
        if p.hit { "cache hit" } else { "prepared" },
        p.path.display(),
        p.full.num_assets(),
        p.train.panel.len(),
        p.test.panel.len()
    );
    Ok(())
}

fn curves_csv(runs: &[SeedMetrics]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "episode", "total_reward", "sharpe", "commission", "final_value"]).runtime()?;
    for r in runs {
        for p in &r.curve {
            w.write_record([
                r.seed.to_string(),
                p.episode.to_string(),
                p.total_reward.to_string(),
                p.sharpe.map(|s| s.to_string()).unwrap_or_default(),
                p.commission.to_string(),
                p.final_value.to_string(),
            ])
            .runtime()?;
        }
    }
    w.into_inner().map_err(|e| anyhow!("{e}")).runtime()
}

pub fn cmd_train(cfg: &RunConfig, save_buffer: bool) -> CliResult<()> {
    let prepared = prepare(cfg)?;
    let exp = ExperimentConfig { env: cfg.env.clone(), agent: cfg.agent.clone(), episodes: cfg.experiment.episodes };
    let observation_len = TradingEnv::new(cfg.env.clone(), prepared.train.clone()).data()?.observation_len();
    let result = multi_seed(&exp, prepared.train.clone(), &cfg.experiment.seeds, cfg.experiment.jobs).runtime()?;
    let dir = cfg.run_dir();
    let symbols = prepared.train.panel.symbols.clone();
    let mut runs = Vec::new();
    for run in result.runs {
        let checkpoint = PathBuf::from("checkpoints").join(format!("seed_{}.json", run.seed));
        write_file(&dir.join(&checkpoint), run.agent.to_checkpoint(save_buffer).runtime()?.as_bytes())?;
        write_file(&dir.join("traces").join(format!("seed_{}.csv", run.seed)), &trace_csv(&symbols, &run.last)?)?;
        runs.push(SeedMetrics { seed: run.seed, curve: run.curve, last: run.last, checkpoint });
    }
    write_file(&dir.join("curves.csv"), &curves_csv(&runs)?)?;
    let metrics = TrainMetrics {
        preset: cfg.env.preset,
        observation_len,
        symbols,
        episodes: cfg.experiment.episodes,
        cache_key: prepared.key,
        env: cfg.env.clone(),
        agent: cfg.agent.clone(),
        runs,
        aggregate: result.aggregate,
    };
    write_json(&dir.join("metrics.json"), &metrics)?;
    print!("{}", comparison_table(&[(cfg.env.preset.name().to_string(), metrics.aggregate.clone())]));
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    checkpoint: &Path,
    learn_on_test: bool,
    out: Option<PathBuf>,
) -> CliResult<()> {
    if !checkpoint.is_file() {
        return Err(anyhow!("checkpoint {} not found", checkpoint.display())).data();
    }
    let text = fs::read_to_string(checkpoint).with_context(|| format!("cannot read {}", checkpoint.display())).data()?;
    let mut agent = Td3Agent::from_checkpoint(&text)
        .with_context(|| format!("invalid checkpoint {}", checkpoint.display()))
        .data()?;
    let prepared = prepare(cfg)?;
    let data: std::sync::Arc<MarketData> = prepared.test.clone();
    let width = cfg.env.preset.observation_len(data.num_assets());
    if agent.obs_dim() != width || agent.action_dim() != data.num_assets() {
        return Err(anyhow!(
            "checkpoint expects {} observations and {} assets, preset `{}` gives {width} and {}",
            agent.obs_dim(),
            agent.action_dim(),
            cfg.env.preset.name(),
            data.num_assets()
        ))
        .usage();
    }
    let report: EvaluationReport = evaluation_report(&mut agent, &cfg.env, data.clone(), learn_on_test).runtime()?;
    let path = out.unwrap_or_else(|| {
        let mut name = String::from("evaluation");
        if cfg.env.no_sell {
            name.push_str("_no_sell");
        }
        if learn_on_test {
            name.push_str("_learn_on_test");
        }
        cfg.run_dir().join(format!("{name}.json"))
    });
    write_json(&path, &report)?;
    write_file(&path.with_extension("trace.csv"), &trace_csv(&data.panel.symbols, &report.stats)?)?;
    let s = &report.stats;
    println!(
        "return {:.2}  sharpe {}  commission {:.2}  final value {:.2}",
        s.total_reward,
        s.sharpe.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into()),
        s.commission_total,
        s.final_value
    );
    if cfg.env.no_sell {
        print!("{}", allocation_text(&report.allocation));
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitPart {
    All,
    Train,
    Test,
}

pub fn cmd_indicators(cfg: &RunConfig, part: SplitPart, out: Option<PathBuf>) -> CliResult<()> {
    let prepared = prepare(cfg)?;
    let data = match part {
        SplitPart::All => &prepared.full,
        SplitPart::Train => &prepared.train,
        SplitPart::Test => &prepared.test,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["date".to_string()];
    for sym in &data.panel.symbols {
        header.extend(INDICATOR_NAMES.iter().map(|n| format!("{sym}_{n}")));
    }
    w.write_record(&header).runtime()?;
    for (t, date) in data.panel.dates.iter().enumerate() {
        let mut row = vec![date.to_string()];
        for block in &data.indicators {
            row.extend(block.row(t).iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        }
        w.write_record(&row).runtime()?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{e}")).runtime()?;
    match out {
        Some(path) => {
            write_file(&path, &bytes)?;
            println!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(&bytes).runtime()?,
    }
    Ok(())
}

/// Metrics files of the three presets under `output`, in lattice order.
pub fn default_metrics(output: &Path) -> Vec<PathBuf> {
    [Preset::Baseline, Preset::Tech, Preset::Full]
        .iter()
        .map(|p| output.join(p.name()).join("metrics.json"))
        .filter(|p| p.is_file())
        .collect()
}

pub fn cmd_report(metrics: &[PathBuf], out: Option<PathBuf>) -> CliResult<()> {
    if metrics.is_empty() {
        return Err(anyhow!("no metrics.json files found; run `train` first")).data();
    }
    let mut columns = Vec::new();
    for path in metrics {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).data()?;
        let m: TrainMetrics = serde_json::from_str(&text).with_context(|| format!("invalid metrics {}", path.display())).data()?;
        columns.push(ReportColumn {
            name: m.preset.name().to_string(),
            observation_len: m.observation_len,
            aggregate: m.aggregate,
        });
    }
    let named: Vec<(String, SeedAggregate)> = columns.iter().map(|c| (c.name.clone(), c.aggregate.clone())).collect();
    let table = comparison_table(&named);
    print!("{table}");
    if let Some(path) = out {
        write_json(&path, &Report { columns, table })?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
