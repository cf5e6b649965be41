//! Loads, aligns and featurizes the inputs once, keyed by a content hash.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use deeptrader::env::MarketData;
use deeptrader::market_data::{align_calendar, load_ohlcv, split, AlignedPanel, TradingCalendar};
use deeptrader::sentiment::{build_series, load_scored_headlines, KeywordMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Classify, CliResult};

/// Bumped whenever the artifact layout or feature code changes.
const FORMAT: &str = "deeptrader-prepared-v1";

pub const CACHE_ENV: &str = "DEEPTRADER_CACHE";

#[derive(Serialize, Deserialize)]
pub struct Artifact {
    pub full: MarketData,
    pub train: MarketData,
    pub test: MarketData,
}

pub struct Prepared {
    pub key: String,
    pub path: PathBuf,
    pub hit: bool,
    pub full: Arc<MarketData>,
    pub train: Arc<MarketData>,
    pub test: Arc<MarketData>,
}

pub fn cache_root(cfg: &RunConfig) -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| cfg.output.join("cache"))
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display())).data()
}

/// Hash of every input byte and every setting that shapes the artifact.
pub fn cache_key(cfg: &RunConfig) -> CliResult<String> {
    let mut h = Sha256::new();
    let mut field = |name: &str, bytes: &[u8]| {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field("format", FORMAT.as_bytes());
    for a in &cfg.data.assets {
        field("symbol", a.symbol.as_bytes());
        field("ohlcv", &read(&a.path)?);
    }
    for (name, p) in [("calendar", &cfg.data.calendar), ("headlines", &cfg.data.headlines), ("keywords", &cfg.data.keywords)] {
        match p {
            Some(p) => field(name, &read(p)?),
            None => field(name, b""),
        }
    }
    field("split", cfg.data.split.to_string().as_bytes());
    field("lookback", &(cfg.env.lookback as u64).to_le_bytes());
    field("price_field", serde_json::to_string(&cfg.env.price_field).expect("enum serializes").as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn build(cfg: &RunConfig) -> CliResult<Artifact> {
    let series = cfg
        .data
        .assets
        .iter()
        .map(|a| load_ohlcv(&a.path, &a.symbol))
        .collect::<Result<Vec<_>, _>>()
        .data()?;
    let calendar = match &cfg.data.calendar {
        Some(p) => TradingCalendar::load(p).data()?,
        None => TradingCalendar::from_sessions(series.iter().flat_map(|s| s.bars.iter().map(|b| b.date))),
    };
    let panel = align_calendar(&series, &calendar).data()?;
    let (train, test) = split(&panel, cfg.data.split).data()?;
    let sentiment = |p: &AlignedPanel| -> CliResult<Option<_>> {
        match (&cfg.data.headlines, &cfg.data.keywords) {
            (Some(h), Some(k)) => {
                let headlines = load_scored_headlines(h).data()?;
                let keywords = KeywordMap::load(k).data()?;
                Ok(Some(build_series(&headlines, &keywords, p)))
            }
            _ => Ok(None),
        }
    };
    let market = |p: AlignedPanel, part: &str| -> CliResult<MarketData> {
        let s = sentiment(&p)?;
        MarketData::build(p, s, cfg.env.lookback, cfg.env.price_field)
            .with_context(|| format!("{part} split"))
            .data()
    };
    Ok(Artifact { full: market(panel, "full")?, train: market(train, "train")?, test: market(test, "test")? })
}

/// Returns the cached artifact for `cfg`, building and storing it on a miss.
pub fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let key = cache_key(cfg)?;
    let dir = cache_root(cfg).join(&key);
    let path = dir.join("market.json");
    let (artifact, hit) = if path.is_file() {
        let text = read(&path)?;
        let a: Artifact = serde_json::from_slice(&text)
            .with_context(|| format!("corrupt cache entry {}", path.display()))
            .data()?;
        (a, true)
    } else {
        let a = build(cfg)?;
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display())).runtime()?;
        let tmp = dir.join("market.json.tmp");
        let json = serde_json::to_vec(&a).runtime()?;
        fs::write(&tmp, json).and_then(|_| fs::rename(&tmp, &path)).runtime()?;
        (a, false)
    };
    if artifact.full.panel.symbols.len() != cfg.data.assets.len() {
        return Err(anyhow!("cache entry {} does not match the configured assets", path.display())).data();
    }
    Ok(Prepared {
        key,
        path,
        hit,
        full: Arc::new(artifact.full),
        train: Arc::new(artifact.train),
        test: Arc::new(artifact.test),
    })
}
