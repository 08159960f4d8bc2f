//! OHLCV market data: per-asset bar series, the tradable universe with its
//! entity aliases, and the trading calendar shared by a backtest run.
//!
//! Bars are loaded from per-ticker CSV files (`date,open,high,low,close,volume`,
//! dates ascending, one row per day). The calendar of a run is the sorted
//! intersection of all loaded series' dates, clipped to the configured range,
//! so every calendar day has a bar for every asset.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("{path}: I/O error: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },
    #[error("{ticker} {date}: invalid bar: {msg}")]
    InvalidBar {
        ticker: String,
        date: NaiveDate,
        msg: String,
    },
    #[error("{ticker}: duplicate or out-of-order date {date}")]
    DuplicateDate { ticker: String, date: NaiveDate },
    #[error("{ticker}: series is empty")]
    EmptySeries { ticker: String },
    #[error("calendar is empty: no common trading days in [{start}, {end}]")]
    EmptyCalendar { start: NaiveDate, end: NaiveDate },
    #[error("portfolio: {0}")]
    InvalidPortfolio(String),
}

/// One daily OHLCV bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Check the per-bar invariants: finite positive prices,
    /// `low <= open,close <= high`, non-negative volume.
    fn validate(&self, ticker: &str) -> Result<(), MarketDataError> {
        let err = |msg: String| MarketDataError::InvalidBar {
            ticker: ticker.to_string(),
            date: self.date,
            msg,
        };
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(err(format!("{name} = {v} is not a positive finite price")));
            }
        }
        if !(self.low <= self.open && self.open <= self.high) {
            return Err(err(format!(
                "open {} outside [low {}, high {}]",
                self.open, self.low, self.high
            )));
        }
        if !(self.low <= self.close && self.close <= self.high) {
            return Err(err(format!(
                "close {} outside [low {}, high {}]",
                self.close, self.low, self.high
            )));
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err(err(format!("volume {} is negative", self.volume)));
        }
        Ok(())
    }
}

/// Bars for one asset, strictly ascending by date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    pub ticker: String,
    bars: Vec<Bar>,
}

impl BarSeries {
    /// Build a validated series. Bars must already be strictly ascending.
    pub fn new(ticker: impl Into<String>, bars: Vec<Bar>) -> Result<Self, MarketDataError> {
        let ticker = ticker.into();
        if bars.is_empty() {
            return Err(MarketDataError::EmptySeries { ticker });
        }
        for bar in &bars {
            bar.validate(&ticker)?;
        }
        for pair in bars.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(MarketDataError::DuplicateDate {
                    ticker,
                    date: pair[1].date,
                });
            }
        }
        Ok(Self { ticker, bars })
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn bar_on(&self, date: NaiveDate) -> Option<&Bar> {
        self.bars
            .binary_search_by_key(&date, |b| b.date)
            .ok()
            .map(|i| &self.bars[i])
    }

    /// All bars dated `<= date`, i.e. the information set available at `date`.
    pub fn bars_through(&self, date: NaiveDate) -> &[Bar] {
        let end = self.bars.partition_point(|b| b.date <= date);
        &self.bars[..end]
    }

    pub fn first_date(&self) -> NaiveDate {
        self.bars[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.bars[self.bars.len() - 1].date
    }
}

/// Raw CSV row; field order is pinned by the on-disk format.
#[derive(Debug, Deserialize)]
struct OhlcvRow {
    date: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
}

/// Load one asset's bars from a CSV file with header
/// `date,open,high,low,close,volume`. Errors name the offending line or date.
pub fn load_ohlcv(path: &Path, ticker: &str) -> Result<BarSeries, MarketDataError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => MarketDataError::Io {
                path: display.clone(),
                source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
            },
            _ => MarketDataError::Parse {
                path: display.clone(),
                line: 1,
                msg: e.to_string(),
            },
        })?;

    let mut bars = Vec::new();
    for result in reader.deserialize::<OhlcvRow>() {
        let row = result.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line())
                .unwrap_or(0);
            MarketDataError::Parse {
                path: display.clone(),
                line,
                msg: e.to_string(),
            }
        })?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| {
            MarketDataError::Parse {
                path: display.clone(),
                // +2: header line plus 1-based data offset.
                line: bars.len() as u64 + 2,
                msg: format!("bad date {:?}: {e}", row.date),
            }
        })?;
        bars.push(Bar {
            date,
            open: row.open,
            high: row.high,
            low: row.low,
            close: row.close,
            volume: row.volume,
        });
    }
    BarSeries::new(ticker, bars)
}

/// The tradable universe: tickers in a fixed order, each with the alias
/// strings (ticker symbol plus company names) used for entity association.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    entries: Vec<PortfolioEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioEntry {
    pub ticker: String,
    /// Alias strings, always including the ticker symbol itself.
    pub aliases: Vec<String>,
}

impl Portfolio {
    pub fn new(entries: Vec<PortfolioEntry>) -> Result<Self, MarketDataError> {
        if entries.is_empty() {
            return Err(MarketDataError::InvalidPortfolio(
                "portfolio has no tickers".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.ticker.clone()) {
                return Err(MarketDataError::InvalidPortfolio(format!(
                    "duplicate ticker {}",
                    e.ticker
                )));
            }
            if !e.aliases.iter().any(|a| a == &e.ticker) {
                return Err(MarketDataError::InvalidPortfolio(format!(
                    "{}: alias list must include the ticker symbol",
                    e.ticker
                )));
            }
            if e.aliases.iter().any(|a| a.is_empty()) {
                return Err(MarketDataError::InvalidPortfolio(format!(
                    "{}: empty alias",
                    e.ticker
                )));
            }
        }
        Ok(Self { entries })
    }

    /// The default ten-asset large-cap universe with company-name aliases.
    pub fn default_universe() -> Self {
        let entries = [
            ("GOOGL", vec!["GOOGL", "Google", "Alphabet"]),
            ("AAPL", vec!["AAPL", "Apple"]),
            ("NVDA", vec!["NVDA", "Nvidia"]),
            ("MSFT", vec!["MSFT", "Microsoft"]),
            ("AMZN", vec!["AMZN", "Amazon"]),
            ("META", vec!["META", "Meta"]),
            ("TSLA", vec!["TSLA", "Tesla"]),
            ("LLY", vec!["LLY", "Eli Lilly"]),
            ("JPM", vec!["JPM", "JPMorgan Chase"]),
            ("XOM", vec!["XOM", "Exxon Mobil"]),
        ]
        .into_iter()
        .map(|(t, aliases)| PortfolioEntry {
            ticker: t.to_string(),
            aliases: aliases.into_iter().map(String::from).collect(),
        })
        .collect();
        Self::new(entries).expect("default universe is valid")
    }

    pub fn entries(&self) -> &[PortfolioEntry] {
        &self.entries
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.ticker.as_str())
    }

    pub fn contains(&self, ticker: &str) -> bool {
        self.entries.iter().any(|e| e.ticker == ticker)
    }

    pub fn aliases_of(&self, ticker: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|e| e.ticker == ticker)
            .map(|e| e.aliases.as_slice())
    }

    /// Position of a ticker in the configured order (association tie-break).
    pub fn rank_of(&self, ticker: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.ticker == ticker)
    }
}

/// Sorted trading days shared by every asset in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calendar {
    dates: Vec<NaiveDate>,
}

impl Calendar {
    /// Intersect the dates of all series, clipped to `[start, end]` inclusive.
    pub fn build(
        series: &[BarSeries],
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<Self, MarketDataError> {
        let mut iter = series.iter();
        let mut common: BTreeSet<NaiveDate> = match iter.next() {
            Some(s) => s.bars.iter().map(|b| b.date).collect(),
            None => BTreeSet::new(),
        };
        for s in iter {
            let dates: BTreeSet<NaiveDate> = s.bars.iter().map(|b| b.date).collect();
            common = common.intersection(&dates).copied().collect();
        }
        let dates: Vec<NaiveDate> = common
            .into_iter()
            .filter(|d| *d >= start && *d <= end)
            .collect();
        if dates.is_empty() {
            return Err(MarketDataError::EmptyCalendar { start, end });
        }
        Ok(Self { dates })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.binary_search(&date).is_ok()
    }

    /// The trading day after `date`, i.e. when orders decided on `date` fill.
    pub fn next_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        let idx = self.dates.partition_point(|d| *d <= date);
        self.dates.get(idx).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn bar(date: &str, close: f64) -> Bar {
        Bar {
            date: d(date),
            open: close,
            high: close * 1.01,
            low: close * 0.99,
            close,
            volume: 1000.0,
        }
    }

    #[test]
    fn load_roundtrip_is_deterministic() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,open,high,low,close,volume").unwrap();
        writeln!(f, "2024-02-01,10.0,10.5,9.5,10.2,100").unwrap();
        writeln!(f, "2024-02-02,10.2,10.8,10.0,10.6,120").unwrap();
        let a = load_ohlcv(f.path(), "TST").unwrap();
        let b = load_ohlcv(f.path(), "TST").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bars().len(), 2);
        assert_eq!(a.bars()[1].close, 10.6);
    }

    #[test]
    fn parse_error_names_line_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,open,high,low,close,volume").unwrap();
        writeln!(f, "2024-02-01,10.0,10.5,9.5,10.2,100").unwrap();
        writeln!(f, "2024-02-02,oops,10.8,10.0,10.6,120").unwrap();
        let err = load_ohlcv(f.path(), "TST").unwrap_err();
        match err {
            MarketDataError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validation_error_names_date() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,open,high,low,close,volume").unwrap();
        writeln!(f, "2024-02-01,10.0,9.0,9.5,10.2,100").unwrap(); // high < open
        let err = load_ohlcv(f.path(), "TST").unwrap_err();
        match err {
            MarketDataError::InvalidBar { date, .. } => assert_eq!(date, d("2024-02-01")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_date_rejected() {
        let bars = vec![bar("2024-02-01", 10.0), bar("2024-02-01", 11.0)];
        let err = BarSeries::new("TST", bars).unwrap_err();
        assert!(matches!(err, MarketDataError::DuplicateDate { .. }));
    }

    #[test]
    fn calendar_is_sorted_intersection_clipped() {
        let s1 = BarSeries::new(
            "A",
            vec![
                bar("2024-02-01", 1.0),
                bar("2024-02-02", 1.0),
                bar("2024-02-05", 1.0),
                bar("2024-02-06", 1.0),
            ],
        )
        .unwrap();
        let s2 = BarSeries::new(
            "B",
            vec![
                bar("2024-02-02", 2.0),
                bar("2024-02-05", 2.0),
                bar("2024-02-06", 2.0),
                bar("2024-02-07", 2.0),
            ],
        )
        .unwrap();
        let cal = Calendar::build(&[s1, s2], d("2024-02-01"), d("2024-02-06")).unwrap();
        assert_eq!(cal.dates(), &[d("2024-02-02"), d("2024-02-05"), d("2024-02-06")]);
        assert_eq!(cal.next_after(d("2024-02-02")), Some(d("2024-02-05")));
        assert_eq!(cal.next_after(d("2024-02-06")), None);
    }

    #[test]
    fn empty_calendar_is_an_error() {
        let s1 = BarSeries::new("A", vec![bar("2024-02-01", 1.0)]).unwrap();
        let s2 = BarSeries::new("B", vec![bar("2024-02-02", 2.0)]).unwrap();
        let err = Calendar::build(&[s1, s2], d("2024-01-01"), d("2024-12-31")).unwrap_err();
        assert!(matches!(err, MarketDataError::EmptyCalendar { .. }));
    }

    #[test]
    fn bars_through_is_inclusive_information_set() {
        let s = BarSeries::new(
            "A",
            vec![bar("2024-02-01", 1.0), bar("2024-02-02", 2.0), bar("2024-02-03", 3.0)],
        )
        .unwrap();
        assert_eq!(s.bars_through(d("2024-02-02")).len(), 2);
        assert_eq!(s.bars_through(d("2024-01-31")).len(), 0);
    }

    #[test]
    fn default_universe_has_ten_entries_with_ticker_aliases() {
        let p = Portfolio::default_universe();
        assert_eq!(p.entries().len(), 10);
        for e in p.entries() {
            assert!(e.aliases.contains(&e.ticker));
        }
        assert_eq!(p.rank_of("GOOGL"), Some(0));
        assert_eq!(p.rank_of("XOM"), Some(9));
    }
}
