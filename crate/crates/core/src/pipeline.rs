//! Composition: raw market data and headline stores in, backtests out.
//!
//! The stages are kept separable so an evaluation sweep can compute the
//! expensive pieces once (price deltas never depend on headlines) and rerun
//! only the news half per scenario:
//!
//! 1. [`compute_price_deltas`]: forecaster-driven expected-return grid.
//! 2. [`sanitize_store`]: optional defense pass that rewrites every stored
//!    fragment to normalized visible text and emits detection reports.
//! 3. [`compute_news_signals`]: associate -> score -> daily mean -> smooth.
//! 4. [`build_signal_grid`] + [`engine::run_backtest`].
//!
//! Sentiment scoring deliberately receives the *stored fragment as-is*. In an
//! unsanitized run that is raw HTML: the scorer's tokenizer treats markup
//! characters as separators, so words hidden in concealed elements influence
//! polarity while tag and attribute junk merely dilutes confidence. That is
//! the modeled weakness. In a sanitized run the store has already been
//! rewritten to clean text, so the same code path scores only what a reader
//! can see. Association always works on visible text only, with no
//! confusable normalization unless the sanitizer ran.

use std::borrow::Cow;
use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::adversary::HomoglyphTable;
use crate::engine::{
    self, BacktestResult, CostConfig, EngineError, SignalGrid, SignalInputs, StrategyParams,
};
use crate::forecaster::{directional_signal, ForecastError, PriceForecaster};
use crate::market_data::{BarSeries, Calendar, Portfolio};
use crate::news::{
    aggregate_daily, associate_rule, score_sentiment_lexicon, smoothed_sentiment, Association,
    DailySentiment, Headline, HeadlineStore, Lexicon, NewsError, ScoredHeadline, SmoothingConfig,
};
use crate::sanitizer::{self, DetectionReport, SanitizeError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    News(#[from] NewsError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("sanitizing headline {id}: {source}")]
    Sanitize { id: String, source: SanitizeError },
}

// ---------------------------------------------------------------------------
// Price side

/// Expected-return grid: delta = (forecast - close_t) / close_t per
/// (ticker, trading day).
#[derive(Debug, Clone, Default)]
pub struct PriceDeltas {
    pub deltas: BTreeMap<(String, NaiveDate), f64>,
    /// Days the forecaster could not serve (insufficient history): those
    /// cells carry a neutral 0 delta and are listed here.
    pub warnings: Vec<String>,
}

pub fn compute_price_deltas(
    forecaster: &dyn PriceForecaster,
    series: &BTreeMap<String, BarSeries>,
    portfolio: &Portfolio,
    calendar: &Calendar,
) -> Result<PriceDeltas, PipelineError> {
    let mut out = PriceDeltas::default();
    for entry in portfolio.entries() {
        let ticker = entry.ticker.as_str();
        let Some(s) = series.get(ticker) else {
            return Err(EngineError::MissingSeries(ticker.to_string()).into());
        };
        for &date in calendar.dates() {
            let key = (ticker.to_string(), date);
            match forecaster.predict(s, date) {
                Ok(forecast) => {
                    let Some(bar) = s.bar_on(date) else {
                        out.warnings
                            .push(format!("{date} {ticker}: no close to anchor delta, neutral"));
                        out.deltas.insert(key, 0.0);
                        continue;
                    };
                    let signal = directional_signal(ticker, date, forecast, bar.close);
                    out.deltas.insert(key, signal.delta);
                }
                Err(ForecastError::InsufficientHistory { have, need, .. }) => {
                    out.warnings.push(format!(
                        "{date} {ticker}: {have} of {need} history bars, neutral delta"
                    ));
                    out.deltas.insert(key, 0.0);
                }
                Err(other) => return Err(other.into()),
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// News side

/// Everything the news half produced, kept for diagnostics and evaluation.
#[derive(Debug, Clone)]
pub struct NewsComputation {
    pub associations: Vec<Association>,
    pub scored: Vec<ScoredHeadline>,
    pub daily: BTreeMap<(String, NaiveDate), DailySentiment>,
    /// Smoothed sentiment per (ticker, trading day), defined on the full
    /// portfolio x calendar grid (0 where the window holds no news).
    pub smoothed: BTreeMap<(String, NaiveDate), f64>,
    /// Headlines that associated to no portfolio asset.
    pub routing_failures: usize,
}

pub fn compute_news_signals(
    store: &HeadlineStore,
    portfolio: &Portfolio,
    calendar: &Calendar,
    lexicon: &Lexicon,
    smoothing: &SmoothingConfig,
) -> Result<NewsComputation, PipelineError> {
    let mut associations = Vec::with_capacity(store.len());
    let mut scored = Vec::new();
    let mut routing_failures = 0usize;
    for h in store.headlines() {
        let assoc = associate_rule(h, portfolio)?;
        match assoc.ticker() {
            Some(ticker) => {
                // Stored fragment as-is — see the module docs for why.
                let score = score_sentiment_lexicon(&h.id, &h.raw_html, lexicon);
                scored.push(ScoredHeadline {
                    headline_id: h.id.clone(),
                    ticker: ticker.to_string(),
                    date: h.date,
                    polarity: score.polarity,
                    confidence: score.confidence,
                });
            }
            None => routing_failures += 1,
        }
        associations.push(assoc);
    }
    let daily = aggregate_daily(&scored)?;
    let mut smoothed = BTreeMap::new();
    for entry in portfolio.entries() {
        for &date in calendar.dates() {
            let value = smoothed_sentiment(&entry.ticker, date, &daily, smoothing);
            smoothed.insert((entry.ticker.clone(), date), value);
        }
    }
    Ok(NewsComputation { associations, scored, daily, smoothed, routing_failures })
}

/// Defense pass: rewrite every stored fragment to its sanitized text
/// (hidden elements stripped, entities decoded, confusables normalized) and
/// collect one detection report per headline.
pub fn sanitize_store(
    store: &HeadlineStore,
    table: &HomoglyphTable,
) -> Result<(HeadlineStore, Vec<DetectionReport>), PipelineError> {
    let mut headlines = Vec::with_capacity(store.len());
    let mut reports = Vec::with_capacity(store.len());
    for h in store.headlines() {
        let clean = sanitizer::sanitize(&h.id, &h.raw_html, table)
            .map_err(|source| PipelineError::Sanitize { id: h.id.clone(), source })?;
        headlines.push(Headline {
            id: h.id.clone(),
            date: h.date,
            raw_html: clean.text,
            source: h.source.clone(),
        });
        reports.push(clean.report);
    }
    Ok((HeadlineStore::new(headlines)?, reports))
}

// ---------------------------------------------------------------------------
// Assembly

/// Join the two signal maps over the full portfolio x calendar grid.
/// Missing cells read neutral (0, 0).
pub fn build_signal_grid(
    deltas: &BTreeMap<(String, NaiveDate), f64>,
    smoothed: &BTreeMap<(String, NaiveDate), f64>,
    portfolio: &Portfolio,
    calendar: &Calendar,
) -> SignalGrid {
    let mut grid = SignalGrid::default();
    for entry in portfolio.entries() {
        for &date in calendar.dates() {
            let key = (entry.ticker.clone(), date);
            grid.insert(
                &entry.ticker,
                date,
                SignalInputs {
                    delta: deltas.get(&key).copied().unwrap_or(0.0),
                    smoothed: smoothed.get(&key).copied().unwrap_or(0.0),
                },
            );
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub params: StrategyParams,
    pub costs: CostConfig,
    pub initial_capital: f64,
    pub smoothing: SmoothingConfig,
    /// Run the sanitizer over the store before the news stages.
    pub sanitize: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            params: StrategyParams::default(),
            costs: CostConfig::default(),
            initial_capital: 1_000_000.0,
            smoothing: SmoothingConfig::default(),
            sanitize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub backtest: BacktestResult,
    pub news: NewsComputation,
    /// One report per headline when the sanitizer ran; empty otherwise.
    pub sanitizer_reports: Vec<DetectionReport>,
    pub delta_warnings: Vec<String>,
}

/// Full pipeline with the price grid supplied by the caller — the form the
/// evaluation sweep uses, computing deltas once and varying only the news.
pub fn run_with_deltas(
    calendar: &Calendar,
    series: &BTreeMap<String, BarSeries>,
    portfolio: &Portfolio,
    store: &HeadlineStore,
    deltas: &PriceDeltas,
    lexicon: &Lexicon,
    table: &HomoglyphTable,
    settings: &RunSettings,
) -> Result<RunOutput, PipelineError> {
    let (store_used, sanitizer_reports) = if settings.sanitize {
        let (s, r) = sanitize_store(store, table)?;
        (Cow::Owned(s), r)
    } else {
        (Cow::Borrowed(store), Vec::new())
    };
    let news = compute_news_signals(&store_used, portfolio, calendar, lexicon, &settings.smoothing)?;
    let grid = build_signal_grid(&deltas.deltas, &news.smoothed, portfolio, calendar);
    let backtest = engine::run_backtest(
        calendar,
        series,
        portfolio,
        &grid,
        &settings.params,
        &settings.costs,
        settings.initial_capital,
    )?;
    Ok(RunOutput {
        backtest,
        news,
        sanitizer_reports,
        delta_warnings: deltas.warnings.clone(),
    })
}

/// One-call convenience: compute the price grid, then run.
#[allow(clippy::too_many_arguments)]
pub fn run_full_backtest(
    calendar: &Calendar,
    series: &BTreeMap<String, BarSeries>,
    portfolio: &Portfolio,
    store: &HeadlineStore,
    forecaster: &dyn PriceForecaster,
    lexicon: &Lexicon,
    table: &HomoglyphTable,
    settings: &RunSettings,
) -> Result<RunOutput, PipelineError> {
    let deltas = compute_price_deltas(forecaster, series, portfolio, calendar)?;
    run_with_deltas(calendar, series, portfolio, store, &deltas, lexicon, table, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::PersistenceForecaster;
    use crate::market_data::{Bar, PortfolioEntry};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn flat_series(ticker: &str, dates: &[&str], price: f64) -> BarSeries {
        let bars = dates
            .iter()
            .map(|s| Bar {
                date: d(s),
                open: price,
                high: price,
                low: price,
                close: price,
                volume: 1.0,
            })
            .collect();
        BarSeries::new(ticker, bars).unwrap()
    }

    fn apple_portfolio() -> Portfolio {
        Portfolio::new(vec![PortfolioEntry {
            ticker: "AAPL".into(),
            aliases: vec!["AAPL".into(), "Apple".into()],
        }])
        .unwrap()
    }

    const DATES: &[&str] = &[
        "2024-02-01",
        "2024-02-02",
        "2024-02-05",
        "2024-02-06",
        "2024-02-07",
    ];

    fn setup() -> (Calendar, BTreeMap<String, BarSeries>, Portfolio) {
        let series = flat_series("AAPL", DATES, 100.0);
        let calendar =
            Calendar::build(std::slice::from_ref(&series), d("2024-02-01"), d("2024-02-07"))
                .unwrap();
        let mut map = BTreeMap::new();
        map.insert("AAPL".to_string(), series);
        (calendar, map, apple_portfolio())
    }

    fn headline(id: &str, date: &str, raw: &str) -> Headline {
        Headline {
            id: id.to_string(),
            date: d(date),
            raw_html: raw.to_string(),
            source: "test".to_string(),
        }
    }

    /// Serves predictions only once two bars of history exist.
    struct NeedsTwo;
    impl PriceForecaster for NeedsTwo {
        fn predict(&self, series: &BarSeries, t: NaiveDate) -> Result<f64, ForecastError> {
            let bars = series.bars_through(t);
            if bars.len() < 2 {
                return Err(ForecastError::InsufficientHistory {
                    ticker: series.ticker.clone(),
                    date: t,
                    have: bars.len(),
                    need: 2,
                });
            }
            Ok(bars.last().unwrap().close * 1.01)
        }
        fn min_history(&self) -> usize {
            2
        }
    }

    #[test]
    fn persistence_deltas_are_exactly_zero() {
        let (calendar, series, portfolio) = setup();
        let out =
            compute_price_deltas(&PersistenceForecaster, &series, &portfolio, &calendar).unwrap();
        assert_eq!(out.deltas.len(), DATES.len());
        assert!(out.deltas.values().all(|&v| v == 0.0));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn insufficient_history_yields_neutral_delta_and_warning() {
        let (calendar, series, portfolio) = setup();
        let out = compute_price_deltas(&NeedsTwo, &series, &portfolio, &calendar).unwrap();
        // First day lacks history: neutral. Later days: +1%.
        assert_eq!(out.deltas[&("AAPL".to_string(), d("2024-02-01"))], 0.0);
        assert!((out.deltas[&("AAPL".to_string(), d("2024-02-02"))] - 0.01).abs() < 1e-12);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("2024-02-01"));
    }

    #[test]
    fn news_signals_flow_from_headline_to_smoothed_grid() {
        let (calendar, _series, portfolio) = setup();
        let store = HeadlineStore::new(vec![
            headline("h1", "2024-02-01", "Apple shares surge on strong results"),
            headline("h2", "2024-02-01", "Weather fine over the weekend"),
        ])
        .unwrap();
        let news = compute_news_signals(
            &store,
            &portfolio,
            &calendar,
            Lexicon::default_lexicon(),
            &SmoothingConfig::default(),
        )
        .unwrap();
        assert_eq!(news.routing_failures, 1, "weather headline routes nowhere");
        assert_eq!(news.scored.len(), 1);
        assert!(news.scored[0].polarity > 0.0);
        // The one positive day dominates the trailing window all week.
        for &date in calendar.dates() {
            let v = news.smoothed[&("AAPL".to_string(), date)];
            assert!(v > 0.0, "smoothed should stay positive through {date}");
        }
    }

    #[test]
    fn hidden_payload_in_raw_fragment_drags_polarity_negative() {
        let (calendar, _series, portfolio) = setup();
        let raw = "Apple shares surge<span style=\"display:none\">losses and layoffs</span>";
        let store = HeadlineStore::new(vec![headline("h1", "2024-02-01", raw)]).unwrap();
        let news = compute_news_signals(
            &store,
            &portfolio,
            &calendar,
            Lexicon::default_lexicon(),
            &SmoothingConfig::default(),
        )
        .unwrap();
        // Routing still works off visible text…
        assert_eq!(news.routing_failures, 0);
        assert_eq!(news.scored[0].ticker, "AAPL");
        // …but the scorer saw the hidden words.
        assert!(news.scored[0].polarity < 0.0);
    }

    #[test]
    fn sanitize_store_defuses_hidden_payload() {
        let (calendar, _series, portfolio) = setup();
        let raw = "Apple shares surge<span style=\"display:none\">losses and layoffs</span>";
        let store = HeadlineStore::new(vec![headline("h1", "2024-02-01", raw)]).unwrap();
        let (clean_store, reports) =
            sanitize_store(&store, &HomoglyphTable::default_confusables()).unwrap();
        assert_eq!(clean_store.headlines()[0].raw_html, "Apple shares surge");
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].hidden_elements_removed, 1);
        assert!(reports[0].suspicious);
        let news = compute_news_signals(
            &clean_store,
            &portfolio,
            &calendar,
            Lexicon::default_lexicon(),
            &SmoothingConfig::default(),
        )
        .unwrap();
        assert!(news.scored[0].polarity > 0.0, "payload no longer scores");
    }

    #[test]
    fn full_run_buys_on_positive_news() {
        let (calendar, series, portfolio) = setup();
        let store = HeadlineStore::new(vec![headline(
            "h1",
            "2024-02-01",
            "Apple shares surge on strong results",
        )])
        .unwrap();
        let out = run_full_backtest(
            &calendar,
            &series,
            &portfolio,
            &store,
            &PersistenceForecaster,
            Lexicon::default_lexicon(),
            &HomoglyphTable::default_confusables(),
            &RunSettings::default(),
        )
        .unwrap();
        // sigma = 0.5*0 + 0.5*0.8 = 0.4 > tau: long 1000 shares, filled next day.
        assert_eq!(out.backtest.fills.len(), 1);
        let fill = &out.backtest.fills[0];
        assert_eq!(fill.date, d("2024-02-02"));
        assert_eq!(fill.shares, 1000);
        // Costs only: return is slightly negative on a flat price.
        assert!(out.backtest.cumulative_return_pct < 0.0);
        assert!(out.backtest.cumulative_return_pct > -0.1);
    }
}
