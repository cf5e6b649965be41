//! `deeptrader`: prepare data, train TD3 agents over several seeds, evaluate
//! checkpoints on the held-out split and tabulate results.

mod commands;
mod config;
mod error;
mod prepare;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deeptrader::env::Preset;

use crate::commands::SplitPart;
use crate::config::{parse_seeds, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "deeptrader", version, about = "Deterministic TD3 stock-trading backtester")]
#[command(after_help = "Exit codes: 0 success, 1 usage, 2 data error, 3 runtime failure.\n\
The cache directory defaults to <output>/cache and can be overridden with DEEPTRADER_CACHE.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(short, long, value_name = "FILE")]
    config: PathBuf,
    /// Override any config key, e.g. `--set env.k_max=50` or `--set agent.hidden=[64,64]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Observation preset: baseline, tech or full.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

impl ConfigArgs {
    fn load(&self, extra: Vec<String>) -> CliResult<RunConfig> {
        let mut overrides = self.set.clone();
        if let Some(p) = self.preset {
            overrides.push(format!("env.preset=\"{}\"", p.name()));
        }
        if let Some(o) = &self.output {
            let abs = std::env::current_dir().map(|d| d.join(o)).unwrap_or_else(|_| o.clone());
            overrides.push(format!("output={}", toml::Value::String(abs.display().to_string())));
        }
        overrides.extend(extra);
        RunConfig::load(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Align, split and featurize the inputs into the content-hashed cache.
    Prepare {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train one agent per seed on the training split.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        episodes: Option<usize>,
        /// Comma-separated seeds.
        #[arg(long, value_name = "LIST")]
        seeds: Option<String>,
        /// Seeds trained in parallel.
        #[arg(long)]
        jobs: Option<usize>,
        /// Store the replay buffer in checkpoints.
        #[arg(long)]
        save_buffer: bool,
    },
    /// Run a checkpoint once over the test split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Disable sell orders (buy-and-hold ablation).
        #[arg(long)]
        no_sell: bool,
        /// Keep training on the test split while trading it.
        #[arg(long)]
        learn_on_test: bool,
        /// Report path (JSON); the trace goes next to it.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Dump the indicator block as CSV, one row per date and ten columns per asset.
    Indicators {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitPart,
        /// Defaults to stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Tabulate train metrics (return, Sharpe, commission) across presets.
    Report {
        /// Find `<output>/<preset>/metrics.json` for every preset.
        #[arg(short, long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Explicit metrics files, one column each.
        metrics: Vec<PathBuf>,
        /// Also write the table as JSON.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Prepare { cfg } => commands::cmd_prepare(&cfg.load(vec![])?),
        Command::Train { cfg, episodes, seeds, jobs, save_buffer } => {
            let mut extra = Vec::new();
            if let Some(e) = episodes {
                extra.push(format!("experiment.episodes={e}"));
            }
            if let Some(s) = seeds {
                let list = parse_seeds(&s).map_err(CliError::Usage)?;
                extra.push(format!("experiment.seeds={list:?}"));
            }
            if let Some(j) = jobs {
                extra.push(format!("experiment.jobs={j}"));
            }
            commands::cmd_train(&cfg.load(extra)?, save_buffer)
        }
        Command::Evaluate { cfg, checkpoint, no_sell, learn_on_test, out } => {
            let extra = if no_sell { vec!["env.no_sell=true".to_string()] } else { vec![] };
            commands::cmd_evaluate(&cfg.load(extra)?, &checkpoint, learn_on_test, out)
        }
        Command::Indicators { cfg, split, out } => commands::cmd_indicators(&cfg.load(vec![])?, split, out),
        Command::Report { config, mut metrics, out } => {
            if let Some(path) = config {
                metrics.extend(commands::default_metrics(&RunConfig::load(&path, &[])?.output));
            }
            commands::cmd_report(&metrics, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
