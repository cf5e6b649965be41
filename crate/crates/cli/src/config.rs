//! Declarative run configuration (TOML) with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use chrono::NaiveDate;
use deeptrader::env::{EnvConfig, Preset};
use deeptrader::td3::Td3Config;
use serde::{Deserialize, Serialize};

use crate::error::{Classify, CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSource {
    pub symbol: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub assets: Vec<AssetSource>,
    /// One `YYYY-MM-DD` session per line; defaults to every date seen in the data.
    pub calendar: Option<PathBuf>,
    /// Scored headline CSV (`date,text,p_pos,p_neg,p_neu`).
    pub headlines: Option<PathBuf>,
    /// Ticker to keyword list JSON.
    pub keywords: Option<PathBuf>,
    /// First date of the test split.
    pub split: NaiveDate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { episodes: 200, seeds: vec![1, 2, 3, 4, 5], jobs: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub agent: Td3Config,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// Sets `dotted.key` in a TOML tree; `raw` is parsed as a TOML value and
/// falls back to a plain string.
pub fn apply_override(root: &mut toml::Table, dotted: &str, raw: &str) -> anyhow::Result<()> {
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut keys: Vec<&str> = dotted.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| anyhow!("empty override key `{dotted}`"))?;
    let mut table = root;
    for k in keys {
        table = table
            .entry(k)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{k}` in `{dotted}` is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path`, applies `key=value` overrides, resolves relative paths
    /// against the config file's directory and validates the result.
    pub fn load(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .usage()?;
        let mut tree: toml::Table = toml::from_str(&text).with_context(|| format!("invalid TOML in {}", path.display())).usage()?;
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not key=value")).usage()?;
            apply_override(&mut tree, k.trim(), v.trim()).usage()?;
        }
        let mut cfg: RunConfig = toml::Value::Table(tree)
            .try_into()
            .with_context(|| format!("invalid config {}", path.display()))
            .usage()?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for a in &mut self.data.assets {
            fix(&mut a.path);
        }
        for p in [&mut self.data.calendar, &mut self.data.headlines, &mut self.data.keywords].into_iter().flatten() {
            fix(p);
        }
        fix(&mut self.output);
    }

    pub fn validate(&self) -> CliResult<()> {
        let usage = |m: String| Err(CliError::Usage(anyhow!(m)));
        if self.data.assets.is_empty() {
            return usage("data.assets lists no assets".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.data.assets {
            if !seen.insert(&a.symbol) {
                return usage(format!("asset {} listed twice", a.symbol));
            }
        }
        if self.experiment.episodes == 0 || self.experiment.jobs == 0 || self.experiment.seeds.is_empty() {
            return usage("experiment needs episodes >= 1, jobs >= 1 and at least one seed".into());
        }
        if self.env.preset == Preset::Full && (self.data.headlines.is_none() || self.data.keywords.is_none()) {
            return usage("preset `full` needs data.headlines and data.keywords".into());
        }
        if self.data.headlines.is_some() != self.data.keywords.is_some() {
            return usage("data.headlines and data.keywords go together".into());
        }
        self.env.validate().usage()?;
        self.agent.validate().usage()?;
        let files = self.data.assets.iter().map(|a| &a.path).chain(
            [&self.data.calendar, &self.data.headlines, &self.data.keywords].into_iter().flatten(),
        );
        for f in files {
            if !f.is_file() {
                return Err(CliError::Data(anyhow!("input file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    /// Per-preset output directory.
    pub fn run_dir(&self) -> PathBuf {
        self.output.join(self.env.preset.name())
    }
}

/// Parses `1,2,5` style seed lists.
pub fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    let seeds: Vec<u64> = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().with_context(|| format!("bad seed `{p}`")))
        .collect::<anyhow::Result<_>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}
