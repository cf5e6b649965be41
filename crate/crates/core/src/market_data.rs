//! OHLCV ingestion, calendar alignment and date splits.
//!
//! Every asset in an [`AlignedPanel`] carries a bar for every panel date, so
//! downstream code indexes `bars[asset][t]` without checking for gaps.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column header expected at the top of every OHLCV file.
pub const OHLCV_HEADER: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse {column} value `{value}`")]
    Malformed { row: usize, column: String, value: String },
    #[error("row {row}: duplicate date")]
    DuplicateDate { row: usize },
    #[error("row {row}: date is earlier than the previous row")]
    NonMonotonicDate { row: usize },
    #[error("row {row}: non-positive price")]
    NonPositivePrice { row: usize },
    #[error("row {row}: inconsistent bar ({reason})")]
    InvalidBar { row: usize, reason: &'static str },
    #[error("no series supplied")]
    NoSeries,
    #[error("assets share no trading session")]
    EmptyIntersection,
    #[error("split boundary {0} leaves an empty side")]
    BoundaryOutOfRange(NaiveDate),
    #[error("calendar line {line}: cannot parse `{value}`")]
    BadCalendar { line: usize, value: String },
}

/// One daily bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl Bar {
    /// Checks the price/volume invariants. `row` is only used for the error.
    pub fn validate(&self, row: usize) -> Result<(), MarketDataError> {
        let prices = [self.open, self.high, self.low, self.close, self.adj_close];
        if prices.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(MarketDataError::NonPositivePrice { row });
        }
        if !(self.volume >= 0.0) {
            return Err(MarketDataError::InvalidBar { row, reason: "negative volume" });
        }
        if self.low > self.high {
            return Err(MarketDataError::InvalidBar { row, reason: "low above high" });
        }
        if self.open < self.low || self.open > self.high {
            return Err(MarketDataError::InvalidBar { row, reason: "open outside low..high" });
        }
        if self.close < self.low || self.close > self.high {
            return Err(MarketDataError::InvalidBar { row, reason: "close outside low..high" });
        }
        Ok(())
    }
}

/// Which bar column is used as the trading price.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceField {
    Close,
    #[default]
    AdjClose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetSeries {
    pub symbol: String,
    pub bars: Vec<Bar>,
}

impl AssetSeries {
    /// Builds a series, checking that dates strictly increase.
    pub fn new(symbol: impl Into<String>, bars: Vec<Bar>) -> Result<Self, MarketDataError> {
        for (i, pair) in bars.windows(2).enumerate() {
            // rows are 1-based after the header
            let row = i + 2;
            if pair[1].date == pair[0].date {
                return Err(MarketDataError::DuplicateDate { row });
            }
            if pair[1].date < pair[0].date {
                return Err(MarketDataError::NonMonotonicDate { row });
            }
        }
        Ok(Self { symbol: symbol.into(), bars })
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }
}

fn parse_field(record: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<f64, MarketDataError> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|_| MarketDataError::Malformed {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// Reads a `Date,Open,High,Low,Close,Adj Close,Volume` file.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn load_ohlcv(path: impl AsRef<Path>, symbol: &str) -> Result<AssetSeries, MarketDataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MarketDataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_ohlcv(&text, symbol).map_err(|e| match e {
        MarketDataError::Csv { source, .. } => MarketDataError::Csv { path: path.display().to_string(), source },
        other => other,
    })
}

/// Parses OHLCV csv text; see [`load_ohlcv`].
pub fn parse_ohlcv(text: &str, symbol: &str) -> Result<AssetSeries, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let csv_err = |source| MarketDataError::Csv { path: "<input>".into(), source };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut cols = [0usize; 7];
    for (slot, name) in cols.iter_mut().zip(OHLCV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))?;
    }

    let mut bars: Vec<Bar> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        let raw_date = record.get(cols[0]).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| MarketDataError::Malformed {
            row,
            column: "Date".into(),
            value: raw_date.to_string(),
        })?;
        let bar = Bar {
            date,
            open: parse_field(&record, cols[1], row, "Open")?,
            high: parse_field(&record, cols[2], row, "High")?,
            low: parse_field(&record, cols[3], row, "Low")?,
            close: parse_field(&record, cols[4], row, "Close")?,
            adj_close: parse_field(&record, cols[5], row, "Adj Close")?,
            volume: parse_field(&record, cols[6], row, "Volume")?,
        };
        if let Some(prev) = bars.last() {
            if prev.date == date {
                return Err(MarketDataError::DuplicateDate { row });
            }
            if prev.date > date {
                return Err(MarketDataError::NonMonotonicDate { row });
            }
        }
        bar.validate(row)?;
        bars.push(bar);
    }
    Ok(AssetSeries { symbol: symbol.to_string(), bars })
}

/// Exchange session list: the set of dates on which the market was open.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    sessions: BTreeSet<NaiveDate>,
}

impl TradingCalendar {
    pub fn from_sessions(sessions: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self { sessions: sessions.into_iter().collect() }
    }

    /// Monday-to-Friday sessions over `[start, end]`, no holidays.
    pub fn weekdays(start: NaiveDate, end: NaiveDate) -> Self {
        use chrono::Datelike;
        let sessions = start
            .iter_days()
            .take_while(|d| *d <= end)
            .filter(|d| d.weekday().number_from_monday() <= 5);
        Self::from_sessions(sessions)
    }

    /// Parses a session file: one ISO date per line, blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Result<Self, MarketDataError> {
        let mut sessions = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let date = NaiveDate::parse_from_str(line, "%Y-%m-%d")
                .map_err(|_| MarketDataError::BadCalendar { line: i + 1, value: line.to_string() })?;
            sessions.insert(date);
        }
        Ok(Self { sessions })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MarketDataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| MarketDataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn is_session(&self, date: NaiveDate) -> bool {
        self.sessions.contains(&date)
    }

    /// First session on or after `date`.
    pub fn next_session_on_or_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        self.sessions.range(date..).next().copied()
    }

    pub fn sessions(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.sessions.iter().copied()
    }
}

/// N assets over a shared date vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedPanel {
    pub symbols: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `bars[asset][t]`
    pub bars: Vec<Vec<Bar>>,
}

impl AlignedPanel {
    pub fn num_assets(&self) -> usize {
        self.symbols.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Trading price of `asset` at `t`.
    pub fn price(&self, asset: usize, t: usize, field: PriceField) -> f64 {
        let bar = &self.bars[asset][t];
        match field {
            PriceField::Close => bar.close,
            PriceField::AdjClose => bar.adj_close,
        }
    }

    pub fn prices_at(&self, t: usize, field: PriceField) -> Vec<f64> {
        (0..self.num_assets()).map(|i| self.price(i, t, field)).collect()
    }

    /// Back to per-asset series, e.g. for re-alignment.
    pub fn to_series(&self) -> Vec<AssetSeries> {
        self.symbols
            .iter()
            .zip(&self.bars)
            .map(|(s, b)| AssetSeries { symbol: s.clone(), bars: b.clone() })
            .collect()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            symbols: self.symbols.clone(),
            dates: self.dates[range.clone()].to_vec(),
            bars: self.bars.iter().map(|b| b[range.clone()].to_vec()).collect(),
        }
    }
}

/// Restricts every series to the dates that all of them share and that are
/// sessions of `calendar`.
pub fn align_calendar(series: &[AssetSeries], calendar: &TradingCalendar) -> Result<AlignedPanel, MarketDataError> {
    let first = series.first().ok_or(MarketDataError::NoSeries)?;
    let mut common: BTreeSet<NaiveDate> =
        first.bars.iter().map(|b| b.date).filter(|d| calendar.is_session(*d)).collect();
    for s in &series[1..] {
        let dates: HashSet<NaiveDate> = s.bars.iter().map(|b| b.date).collect();
        common.retain(|d| dates.contains(d));
    }
    if common.is_empty() {
        return Err(MarketDataError::EmptyIntersection);
    }
    let bars = series
        .iter()
        .map(|s| s.bars.iter().filter(|b| common.contains(&b.date)).copied().collect())
        .collect();
    Ok(AlignedPanel {
        symbols: series.iter().map(|s| s.symbol.clone()).collect(),
        dates: common.into_iter().collect(),
        bars,
    })
}

/// Splits into dates `< boundary` and dates `>= boundary`; both sides must be nonempty.
pub fn split(panel: &AlignedPanel, boundary: NaiveDate) -> Result<(AlignedPanel, AlignedPanel), MarketDataError> {
    let cut = panel.dates.partition_point(|d| *d < boundary);
    if cut == 0 || cut == panel.len() {
        return Err(MarketDataError::BoundaryOutOfRange(boundary));
    }
    Ok((panel.slice(0..cut), panel.slice(cut..panel.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn bar(date: NaiveDate, close: f64) -> Bar {
        Bar { date, open: close, high: close, low: close, close, adj_close: close, volume: 100.0 }
    }

    fn series(symbol: &str, dates: &[NaiveDate]) -> AssetSeries {
        AssetSeries::new(symbol, dates.iter().enumerate().map(|(i, &dt)| bar(dt, 10.0 + i as f64)).collect()).unwrap()
    }

    const HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume\n";

    #[test]
    fn parses_three_rows() {
        let text = format!(
            "{HEADER}2020-01-02,10,10,10,10,10,5\n2020-01-03,11,11,11,11,11,5\n2020-01-06,12,12,12,12,12,5\n"
        );
        let s = parse_ohlcv(&text, "X").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.closes(), vec![10.0, 11.0, 12.0]);
    }

    #[test]
    fn rejects_duplicate_date() {
        let text = format!("{HEADER}2020-01-02,10,10,10,10,10,5\n2020-01-02,11,11,11,11,11,5\n");
        assert!(matches!(parse_ohlcv(&text, "X"), Err(MarketDataError::DuplicateDate { row: 2 })));
    }

    #[test]
    fn rejects_zero_close() {
        let text = format!("{HEADER}2020-01-02,10,10,10,10,10,5\n2020-01-03,1,1,0,0,1,5\n");
        assert!(matches!(parse_ohlcv(&text, "X"), Err(MarketDataError::NonPositivePrice { row: 2 })));
    }

    #[test]
    fn rejects_backwards_dates_and_missing_columns() {
        let text = format!("{HEADER}2020-01-03,10,10,10,10,10,5\n2020-01-02,11,11,11,11,11,5\n");
        assert!(matches!(parse_ohlcv(&text, "X"), Err(MarketDataError::NonMonotonicDate { row: 2 })));
        let text = "Date,Open,High,Low,Close,Volume\n2020-01-02,1,1,1,1,1\n";
        assert!(matches!(parse_ohlcv(text, "X"), Err(MarketDataError::MissingColumn(c)) if c == "Adj Close"));
    }

    #[test]
    fn malformed_cell_reports_row() {
        let text = format!("{HEADER}2020-01-02,10,10,10,10,10,5\n2020-01-03,1,1,1,abc,1,5\n");
        match parse_ohlcv(&text, "X") {
            Err(MarketDataError::Malformed { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "Close");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_ohlcv("/nonexistent/x.csv", "X"), Err(MarketDataError::Io { .. })));
    }

    #[test]
    fn identical_dates_align_to_same_length() {
        let cal = TradingCalendar::weekdays(d("2020-01-01"), d("2020-01-31"));
        let dates: Vec<_> = cal.sessions().take(5).collect();
        let panel = align_calendar(&[series("A", &dates), series("B", &dates)], &cal).unwrap();
        assert_eq!(panel.len(), 5);
        assert_eq!(panel.num_assets(), 2);
    }

    #[test]
    fn intersection_truncates_to_common_range() {
        let cal = TradingCalendar::weekdays(d("2020-01-01"), d("2020-02-28"));
        let dates: Vec<_> = cal.sessions().take(10).collect();
        let panel = align_calendar(&[series("A", &dates), series("B", &dates[4..])], &cal).unwrap();
        assert_eq!(panel.len(), 6);
        assert_eq!(panel.dates, dates[4..].to_vec());
        // B keeps its own bars, A is cut to the shared range
        assert_eq!(panel.bars[0][0].close, 14.0);
        assert_eq!(panel.bars[1][0].close, 10.0);
    }

    #[test]
    fn saturday_dropped() {
        // week of 2020-01-06 (Mon) .. 2020-01-11 (Sat)
        let cal = TradingCalendar::weekdays(d("2020-01-06"), d("2020-01-12"));
        let expected: Vec<_> = cal.sessions().collect();
        assert_eq!(expected.len(), 5);
        let with_sat: Vec<_> = (6..=11).map(|day| NaiveDate::from_ymd_opt(2020, 1, day).unwrap()).collect();
        let panel = align_calendar(&[series("A", &with_sat)], &cal).unwrap();
        assert_eq!(panel.dates, expected);
        assert!(!panel.dates.contains(&d("2020-01-11")));
    }

    #[test]
    fn empty_intersection_errors() {
        let cal = TradingCalendar::weekdays(d("2020-01-01"), d("2020-03-31"));
        let dates: Vec<_> = cal.sessions().collect();
        let err = align_calendar(&[series("A", &dates[..5]), series("B", &dates[10..15])], &cal);
        assert!(matches!(err, Err(MarketDataError::EmptyIntersection)));
        assert!(matches!(align_calendar(&[], &cal), Err(MarketDataError::NoSeries)));
    }

    #[test]
    fn split_counts() {
        let cal = TradingCalendar::weekdays(d("2020-01-06"), d("2020-01-09"));
        let dates: Vec<_> = cal.sessions().collect();
        let panel = align_calendar(&[series("A", &dates)], &cal).unwrap();
        let (train, test) = split(&panel, dates[2]).unwrap();
        assert_eq!((train.len(), test.len()), (2, 2));
        assert!(split(&panel, dates[0]).is_err());
        assert!(split(&panel, d("2021-01-01")).is_err());
    }

    #[test]
    fn eight_year_split() {
        let cal = TradingCalendar::weekdays(d("2010-01-01"), d("2018-01-01"));
        let dates: Vec<_> = cal.sessions().collect();
        let panel = align_calendar(&[series("A", &dates)], &cal).unwrap();
        let (train, test) = split(&panel, d("2016-01-01")).unwrap();
        let years = |p: &AlignedPanel| (p.dates[p.len() - 1] - p.dates[0]).num_days() as f64 / 365.25;
        assert!((years(&train) - 6.0).abs() < 0.05);
        assert!((years(&test) - 2.0).abs() < 0.05);
    }

    #[test]
    fn calendar_file_parse() {
        let cal = TradingCalendar::parse("# sessions\n2020-01-02\n\n2020-01-03\n").unwrap();
        assert!(cal.is_session(d("2020-01-03")));
        assert_eq!(cal.next_session_on_or_after(d("2020-01-03")), Some(d("2020-01-03")));
        assert!(TradingCalendar::parse("2020-13-01\n").is_err());
    }
}
