//! Per-asset daily news sentiment in `{-1, 0, 1}`.
//!
//! Input headlines are already scored (positive/negative/neutral
//! probabilities). Each headline is attached to every asset whose keywords it
//! mentions, then a day's matched headlines are averaged and the sign of
//! `mean(p_pos) - mean(p_neg)` becomes the score. Days without news score 0,
//! and ties score -1.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::AlignedPanel;

/// Allowed deviation of `p_pos + p_neg + p_neu` from 1.
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

pub const SCORED_HEADER: [&str; 5] = ["date", "text", "p_pos", "p_neg", "p_neu"];

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("keyword map is not valid json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("asset `{0}` has no keywords")]
    EmptyKeywords(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredHeadline {
    pub date: NaiveDate,
    pub text: String,
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_neu: f64,
}

impl ScoredHeadline {
    pub fn validate(&self) -> Result<(), String> {
        let ps = [self.p_pos, self.p_neg, self.p_neu];
        if ps.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err("negative or non-finite probability".into());
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(format!("probabilities sum to {sum}"));
        }
        Ok(())
    }
}

/// Reads the `date,text,p_pos,p_neg,p_neu` file produced by the headline scorer.
pub fn load_scored_headlines(path: impl AsRef<Path>) -> Result<Vec<ScoredHeadline>, SentimentError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SentimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scored_headlines(&text)
}

pub fn parse_scored_headlines(text: &str) -> Result<Vec<ScoredHeadline>, SentimentError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).ne(SCORED_HEADER) {
        return Err(SentimentError::BadRow {
            row: 0,
            reason: format!("expected header {}", SCORED_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, record) in reader.deserialize::<ScoredHeadline>().enumerate() {
        let row = i + 1;
        let h = record.map_err(|e| SentimentError::BadRow { row, reason: e.to_string() })?;
        h.validate().map_err(|reason| SentimentError::BadRow { row, reason })?;
        out.push(h);
    }
    Ok(out)
}

/// Writes headlines in the scorer's csv layout.
pub fn write_scored_headlines<W: std::io::Write>(out: W, headlines: &[ScoredHeadline]) -> Result<(), SentimentError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SCORED_HEADER)?;
    for h in headlines {
        w.serialize(h)?;
    }
    w.flush().map_err(|source| SentimentError::Io { path: "<output>".into(), source })?;
    Ok(())
}

/// Ticker to lower-cased match strings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordMap(BTreeMap<String, Vec<String>>);

impl KeywordMap {
    pub fn new(map: BTreeMap<String, Vec<String>>) -> Result<Self, SentimentError> {
        let mut clean = BTreeMap::new();
        for (asset, words) in map {
            let words: Vec<String> = words
                .into_iter()
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect();
            if words.is_empty() {
                return Err(SentimentError::EmptyKeywords(asset));
            }
            clean.insert(asset, words);
        }
        Ok(Self(clean))
    }

    pub fn parse(json: &str) -> Result<Self, SentimentError> {
        Self::new(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SentimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SentimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn keywords(&self, asset: &str) -> Result<&[String], SentimentError> {
        self.0
            .get(asset)
            .map(Vec::as_slice)
            .ok_or_else(|| SentimentError::UnknownAsset(asset.to_string()))
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Case-insensitive occurrence of `keyword` (already lower-case) not glued
/// to letters or digits on either side.
pub fn mentions(text: &str, keyword: &str) -> bool {
    let lower = text.to_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(keyword) {
        let start = from + pos;
        let end = start + keyword.len();
        let before = lower[..start].chars().next_back();
        let after = lower[end..].chars().next();
        if !is_word_char(before) && !is_word_char(after) {
            return true;
        }
        from = start + lower[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

fn matches_any(text: &str, keywords: &[String]) -> bool {
    keywords.iter().any(|k| mentions(text, k))
}

/// Headlines dated `date` that mention `asset`.
pub fn match_headlines<'a>(
    headlines: &'a [ScoredHeadline],
    keywords: &KeywordMap,
    asset: &str,
    date: NaiveDate,
) -> Result<Vec<&'a ScoredHeadline>, SentimentError> {
    let words = keywords.keywords(asset)?;
    Ok(headlines.iter().filter(|h| h.date == date && matches_any(&h.text, words)).collect())
}

/// Score of one asset-day from its matched headlines.
pub fn daily_score<'a>(matched: impl IntoIterator<Item = &'a ScoredHeadline>) -> i8 {
    let (mut pos, mut neg, mut n) = (0.0, 0.0, 0usize);
    for h in matched {
        pos += h.p_pos;
        neg += h.p_neg;
        n += 1;
    }
    if n == 0 {
        return 0;
    }
    let n = n as f64;
    if pos / n > neg / n {
        1
    } else {
        -1
    }
}

/// Scores on the panel grid, `scores[asset][t]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentSeries {
    pub symbols: Vec<String>,
    pub scores: Vec<Vec<i8>>,
}

impl SentimentSeries {
    pub fn zeros(panel: &AlignedPanel) -> Self {
        Self {
            symbols: panel.symbols.clone(),
            scores: vec![vec![0; panel.len()]; panel.num_assets()],
        }
    }

    pub fn score(&self, asset: usize, t: usize) -> i8 {
        self.scores[asset][t]
    }
}

/// Index of the panel date a headline counts toward: its own date if that is
/// a panel date, else the next panel date. Headlines before the first or
/// after the last panel date are dropped.
fn attach_index(dates: &[NaiveDate], date: NaiveDate) -> Option<usize> {
    let idx = dates.partition_point(|d| *d < date);
    if idx == dates.len() || (idx == 0 && dates[0] != date) {
        return None;
    }
    Some(idx)
}

/// Materializes a score for every `(asset, date)` in the panel.
///
/// Assets missing from `keywords` score 0 throughout.
pub fn build_series(headlines: &[ScoredHeadline], keywords: &KeywordMap, panel: &AlignedPanel) -> SentimentSeries {
    let mut by_day: Vec<Vec<&ScoredHeadline>> = vec![Vec::new(); panel.len()];
    for h in headlines {
        if let Some(t) = attach_index(&panel.dates, h.date) {
            by_day[t].push(h);
        }
    }
    let scores = panel
        .symbols
        .iter()
        .map(|sym| match keywords.keywords(sym) {
            Ok(words) => by_day
                .iter()
                .map(|day| daily_score(day.iter().copied().filter(|h| matches_any(&h.text, words))))
                .collect(),
            Err(_) => vec![0; panel.len()],
        })
        .collect();
    SentimentSeries { symbols: panel.symbols.clone(), scores }
}
