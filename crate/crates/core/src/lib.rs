//! Core library for a news-driven algorithmic trading system and the
//! adversarial evaluation harness built around it.
//!
//! The pipeline under test fuses two signals per asset and trading day:
//! a price forecast from a recurrent model over a rolling OHLCV window, and
//! a smoothed daily news-sentiment score. A threshold rule turns the fused
//! signal into Long/Short/Hold decisions which a backtest engine executes
//! with slippage and commission.
//!
//! The harness perturbs headlines with two human-imperceptible
//! transformations — homoglyph substitution of entity names and hidden-text
//! injection — then runs paired clean-vs-attacked backtests and reports the
//! monetary impact. A sanitizer module implements the corresponding defense.
//!
//! Module map:
//! - [`market_data`]: OHLCV bars, portfolio universe, trading calendar
//! - [`forecaster`]: windowed recurrent price forecaster + persistence baseline
//! - [`news`]: headline store, entity association, sentiment, daily smoothing
//! - [`remote`]: prompt rendering / response parsing for remote LLM backends
//! - [`adversary`]: homoglyph tables, attack transforms, sweep planning
//! - [`sanitizer`]: visible-text extraction and homoglyph normalization
//! - [`engine`]: signal fusion, position sizing, order execution, backtest
//! - [`pipeline`]: end-to-end composition of the above into a single run
//! - [`evaluator`]: paired runs, attack sweeps, impact aggregation
//! - [`fixtures`]: deterministic synthetic corpora and price bundles

pub mod adversary;
pub mod engine;
pub mod evaluator;
pub mod fixtures;
pub mod forecaster;
pub mod market_data;
pub mod news;
pub mod pipeline;
pub mod remote;
pub mod sanitizer;
