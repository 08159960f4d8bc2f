//! Signal fusion and trade execution: the backtest engine.
//!
//! Per asset and trading day the engine fuses the price and news signals,
//! `sigma = w_price * delta + w_news * smoothed`, and applies a symmetric
//! threshold: Long iff `sigma > threshold`, Short iff `sigma < -threshold`,
//! Hold otherwise (strict inequalities, so the boundary is Hold).
//!
//! Decisions made on day `t` execute at the next trading day's open with
//! proportional slippage (buys fill above the open, sells below) and a fixed
//! per-share commission. Position flips close the old position before
//! opening the new one; Hold keeps positions by default. Buys are scaled
//! down to the affordable integer share count so cash never goes negative.
//! Equity is marked to market at each day's close; the final day closes the
//! run with no new orders.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{BarSeries, Calendar, Portfolio};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid strategy parameters:\n{}", .0.join("\n"))]
    InvalidParams(Vec<String>),
    #[error("non-finite signal for {ticker} on {date}: delta={delta}, smoothed={smoothed}")]
    NonFiniteSignal {
        ticker: String,
        date: NaiveDate,
        delta: f64,
        smoothed: f64,
    },
    #[error("equity became non-finite on {date}: cash={cash}, positions: {positions}")]
    NonFiniteEquity {
        date: NaiveDate,
        cash: f64,
        positions: String,
    },
    #[error("no bar series supplied for portfolio ticker {0}")]
    MissingSeries(String),
}

// ---------------------------------------------------------------------------
// Parameters

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    /// Fuse both signals with the configured weights.
    #[default]
    Hybrid,
    /// Price signal only; the effective weights are forced to (1, 0).
    PriceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub mode: StrategyMode,
    pub w_price: f64,
    pub w_news: f64,
    /// Decision threshold tau (strict inequalities).
    pub threshold: f64,
    /// Fraction of available cash committed per new position.
    pub capital_fraction: f64,
    /// When false, a Hold decision closes any open position instead of
    /// keeping it.
    pub hold_keeps_position: bool,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            mode: StrategyMode::Hybrid,
            w_price: 0.5,
            w_news: 0.5,
            threshold: 0.005,
            capital_fraction: 0.1,
            hold_keeps_position: true,
        }
    }
}

impl StrategyParams {
    pub fn hybrid(w_price: f64, w_news: f64, threshold: f64, capital_fraction: f64) -> Self {
        Self { mode: StrategyMode::Hybrid, w_price, w_news, threshold, capital_fraction, hold_keeps_position: true }
    }

    pub fn price_only(threshold: f64, capital_fraction: f64) -> Self {
        Self { mode: StrategyMode::PriceOnly, w_price: 1.0, w_news: 0.0, threshold, capital_fraction, hold_keeps_position: true }
    }

    /// Collect *all* problems rather than stopping at the first.
    pub fn validate(&self) -> Result<(), EngineError> {
        let mut problems = Vec::new();
        if let StrategyMode::Hybrid = self.mode {
            if !(self.w_price.is_finite() && self.w_news.is_finite()) {
                problems.push("signal weights must be finite".to_string());
            } else {
                if (self.w_price + self.w_news - 1.0).abs() > 1e-12 {
                    problems.push(format!(
                        "signal weights must sum to 1 (got {} + {} = {})",
                        self.w_price,
                        self.w_news,
                        self.w_price + self.w_news
                    ));
                }
                if self.w_price < 0.0 || self.w_news < 0.0 {
                    problems.push("signal weights must be non-negative".to_string());
                }
            }
        }
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            problems.push(format!("threshold must be >= 0 (got {})", self.threshold));
        }
        if !(self.capital_fraction.is_finite()
            && self.capital_fraction > 0.0
            && self.capital_fraction <= 1.0)
        {
            problems.push(format!(
                "capital_fraction must be in (0, 1] (got {})",
                self.capital_fraction
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(EngineError::InvalidParams(problems))
        }
    }

    /// Weights actually used for fusion; price-only mode pins (1, 0).
    pub fn effective_weights(&self) -> (f64, f64) {
        match self.mode {
            StrategyMode::Hybrid => (self.w_price, self.w_news),
            StrategyMode::PriceOnly => (1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub commission_per_share: f64,
    /// Proportional slippage: buys fill at open*(1+f), sells at open*(1-f).
    pub slippage_frac: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { commission_per_share: 0.005, slippage_frac: 0.0002 }
    }
}

// ---------------------------------------------------------------------------
// Signals and decisions

/// Per-(ticker, day) model inputs. Missing entries read as neutral (0, 0).
#[derive(Debug, Clone, Default)]
pub struct SignalGrid {
    inner: BTreeMap<(String, NaiveDate), SignalInputs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalInputs {
    pub delta: f64,
    pub smoothed: f64,
}

impl SignalGrid {
    pub fn insert(&mut self, ticker: &str, date: NaiveDate, inputs: SignalInputs) {
        self.inner.insert((ticker.to_string(), date), inputs);
    }

    pub fn get(&self, ticker: &str, date: NaiveDate) -> SignalInputs {
        self.inner
            .get(&(ticker.to_string(), date))
            .copied()
            .unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, NaiveDate), &SignalInputs)> {
        self.inner.iter()
    }
}

/// The fused signal that produced a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSignal {
    pub ticker: String,
    pub date: NaiveDate,
    pub delta: f64,
    pub smoothed: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Long,
    Short,
    Hold,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Long => "long",
            Action::Short => "short",
            Action::Hold => "hold",
        }
    }
}

/// One decision row in the action log. Hold always records 0 target shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub signal: FusedSignal,
    pub action: Action,
    pub target_shares: u64,
}

/// sigma = w_price * delta + w_news * smoothed
pub fn fuse(delta: f64, smoothed: f64, params: &StrategyParams) -> f64 {
    let (wp, wn) = params.effective_weights();
    wp * delta + wn * smoothed
}

/// Strict-threshold decision rule; the boundary itself is Hold.
pub fn decide(sigma: f64, threshold: f64) -> Action {
    if sigma > threshold {
        Action::Long
    } else if sigma < -threshold {
        Action::Short
    } else {
        Action::Hold
    }
}

/// floor(capital_fraction * cash / price) as a whole share count.
pub fn size_position(cash: f64, capital_fraction: f64, price: f64) -> u64 {
    if !(cash > 0.0 && price > 0.0 && price.is_finite() && cash.is_finite()) {
        return 0;
    }
    let shares = (capital_fraction * cash / price).floor();
    if shares <= 0.0 {
        0
    } else {
        shares as u64
    }
}

// ---------------------------------------------------------------------------
// Execution

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

/// An executed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub date: NaiveDate,
    pub ticker: String,
    pub side: Side,
    pub shares: u64,
    /// Execution price after slippage.
    pub price: f64,
    pub commission: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OrderPurpose {
    Close,
    Open,
}

#[derive(Debug, Clone)]
struct Order {
    ticker: String,
    side: Side,
    shares: u64,
    purpose: OrderPurpose,
}

/// End-of-day snapshot. `equity = cash + position_value` always.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub date: NaiveDate,
    pub cash: f64,
    pub position_value: f64,
    pub equity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub initial_capital: f64,
    pub final_equity: f64,
    pub cumulative_return_pct: f64,
    pub equity_curve: Vec<EquityPoint>,
    pub fills: Vec<Fill>,
    pub actions: Vec<ActionRecord>,
    pub warnings: Vec<String>,
}

impl BacktestResult {
    /// `date,equity` CSV.
    pub fn equity_csv(&self) -> String {
        let mut out = String::from("date,equity\n");
        for p in &self.equity_curve {
            let _ = writeln!(out, "{},{}", p.date, p.equity);
        }
        out
    }

    /// `date,ticker,side,shares,price,commission` CSV.
    pub fn trades_csv(&self) -> String {
        let mut out = String::from("date,ticker,side,shares,price,commission\n");
        for f in &self.fills {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                f.date,
                f.ticker,
                match f.side {
                    Side::Buy => "buy",
                    Side::Sell => "sell",
                },
                f.shares,
                f.price,
                f.commission
            );
        }
        out
    }

    /// `date,ticker,delta,smoothed,sigma,action,target_shares` CSV.
    pub fn actions_csv(&self) -> String {
        let mut out = String::from("date,ticker,delta,smoothed,sigma,action,target_shares\n");
        for a in &self.actions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                a.signal.date,
                a.signal.ticker,
                a.signal.delta,
                a.signal.smoothed,
                a.signal.sigma,
                a.action.as_str(),
                a.target_shares
            );
        }
        out
    }
}

struct EngineState {
    cash: f64,
    /// Signed share counts; zero entries are removed.
    positions: BTreeMap<String, i64>,
    fills: Vec<Fill>,
    warnings: Vec<String>,
}

impl EngineState {
    fn position(&self, ticker: &str) -> i64 {
        self.positions.get(ticker).copied().unwrap_or(0)
    }

    fn adjust(&mut self, ticker: &str, delta: i64) {
        let entry = self.positions.entry(ticker.to_string()).or_insert(0);
        *entry += delta;
        if *entry == 0 {
            self.positions.remove(ticker);
        }
    }

    fn positions_snapshot(&self) -> String {
        if self.positions.is_empty() {
            return "none".to_string();
        }
        self.positions
            .iter()
            .map(|(t, n)| format!("{t}:{n}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Execute one order at `date`'s open. Buys are scaled to affordability;
/// unexecutable orders are dropped with a warning.
fn execute_order(
    state: &mut EngineState,
    order: &Order,
    date: NaiveDate,
    series: &BTreeMap<String, BarSeries>,
    costs: &CostConfig,
) {
    let Some(bar) = series.get(&order.ticker).and_then(|s| s.bar_on(date)) else {
        state.warnings.push(format!(
            "{date} {}: order dropped, no bar for execution day",
            order.ticker
        ));
        return;
    };
    match order.side {
        Side::Buy => {
            let price = bar.open * (1.0 + costs.slippage_frac);
            let per_share = price + costs.commission_per_share;
            let affordable = if per_share > 0.0 {
                (state.cash / per_share).floor().max(0.0) as u64
            } else {
                0
            };
            let shares = order.shares.min(affordable);
            if shares == 0 {
                state.warnings.push(format!(
                    "{date} {}: buy of {} shares dropped, insufficient cash",
                    order.ticker, order.shares
                ));
                return;
            }
            if shares < order.shares {
                state.warnings.push(format!(
                    "{date} {}: buy scaled from {} to {} shares to keep cash non-negative",
                    order.ticker, order.shares, shares
                ));
            }
            let commission = costs.commission_per_share * shares as f64;
            state.cash -= shares as f64 * price + commission;
            state.adjust(&order.ticker, shares as i64);
            state.fills.push(Fill {
                date,
                ticker: order.ticker.clone(),
                side: Side::Buy,
                shares,
                price,
                commission,
            });
        }
        Side::Sell => {
            let price = bar.open * (1.0 - costs.slippage_frac);
            if price <= costs.commission_per_share {
                state.warnings.push(format!(
                    "{date} {}: sell dropped, per-share proceeds not positive",
                    order.ticker
                ));
                return;
            }
            let commission = costs.commission_per_share * order.shares as f64;
            state.cash += order.shares as f64 * price - commission;
            state.adjust(&order.ticker, -(order.shares as i64));
            state.fills.push(Fill {
                date,
                ticker: order.ticker.clone(),
                side: Side::Sell,
                shares: order.shares,
                price,
                commission,
            });
        }
    }
}

/// Decide one asset's orders for day `t`; returns the action record and any
/// orders to queue for the next open.
fn step_asset(
    state: &EngineState,
    ticker: &str,
    date: NaiveDate,
    close: f64,
    inputs: SignalInputs,
    params: &StrategyParams,
) -> (ActionRecord, Vec<Order>) {
    let sigma = fuse(inputs.delta, inputs.smoothed, params);
    let action = decide(sigma, params.threshold);
    let current = state.position(ticker);
    let mut orders = Vec::new();
    let target_shares: u64;
    match action {
        Action::Hold => {
            target_shares = 0;
            if !params.hold_keeps_position && current != 0 {
                orders.push(Order {
                    ticker: ticker.to_string(),
                    side: if current > 0 { Side::Sell } else { Side::Buy },
                    shares: current.unsigned_abs(),
                    purpose: OrderPurpose::Close,
                });
            }
        }
        Action::Long => {
            if current > 0 {
                // Persist the existing long; no re-sizing.
                target_shares = current as u64;
            } else {
                if current < 0 {
                    orders.push(Order {
                        ticker: ticker.to_string(),
                        side: Side::Buy,
                        shares: current.unsigned_abs(),
                        purpose: OrderPurpose::Close,
                    });
                }
                let size = size_position(state.cash, params.capital_fraction, close);
                target_shares = size;
                if size > 0 {
                    orders.push(Order {
                        ticker: ticker.to_string(),
                        side: Side::Buy,
                        shares: size,
                        purpose: OrderPurpose::Open,
                    });
                }
            }
        }
        Action::Short => {
            if current < 0 {
                target_shares = current.unsigned_abs();
            } else {
                if current > 0 {
                    orders.push(Order {
                        ticker: ticker.to_string(),
                        side: Side::Sell,
                        shares: current as u64,
                        purpose: OrderPurpose::Close,
                    });
                }
                let size = size_position(state.cash, params.capital_fraction, close);
                target_shares = size;
                if size > 0 {
                    orders.push(Order {
                        ticker: ticker.to_string(),
                        side: Side::Sell,
                        shares: size,
                        purpose: OrderPurpose::Open,
                    });
                }
            }
        }
    }
    let record = ActionRecord {
        signal: FusedSignal {
            ticker: ticker.to_string(),
            date,
            delta: inputs.delta,
            smoothed: inputs.smoothed,
            sigma,
        },
        action,
        target_shares,
    };
    (record, orders)
}

/// Run the full backtest over the calendar.
///
/// Day loop: execute the previous day's orders at today's open, decide
/// today's actions from signals dated today (sizing references today's
/// close), then mark equity to market at today's close. Closes execute
/// before opens so flip proceeds fund the new position.
pub fn run_backtest(
    calendar: &Calendar,
    series: &BTreeMap<String, BarSeries>,
    portfolio: &Portfolio,
    signals: &SignalGrid,
    params: &StrategyParams,
    costs: &CostConfig,
    initial_capital: f64,
) -> Result<BacktestResult, EngineError> {
    params.validate()?;
    if !(initial_capital.is_finite() && initial_capital > 0.0) {
        return Err(EngineError::InvalidParams(vec![format!(
            "initial capital must be positive and finite (got {initial_capital})"
        )]));
    }
    for t in portfolio.tickers() {
        if !series.contains_key(t) {
            return Err(EngineError::MissingSeries(t.to_string()));
        }
    }
    for ((ticker, date), s) in signals.iter() {
        if !(s.delta.is_finite() && s.smoothed.is_finite()) {
            return Err(EngineError::NonFiniteSignal {
                ticker: ticker.clone(),
                date: *date,
                delta: s.delta,
                smoothed: s.smoothed,
            });
        }
    }

    let mut state = EngineState {
        cash: initial_capital,
        positions: BTreeMap::new(),
        fills: Vec::new(),
        warnings: Vec::new(),
    };
    let mut actions = Vec::new();
    let mut equity_curve = Vec::with_capacity(calendar.len());
    let mut pending: Vec<Order> = Vec::new();
    let dates = calendar.dates();

    for (di, &t) in dates.iter().enumerate() {
        // 1. Fill yesterday's orders at today's open: closes, then opens.
        for order in pending.iter().filter(|o| o.purpose == OrderPurpose::Close) {
            execute_order(&mut state, order, t, series, costs);
        }
        for order in pending.iter().filter(|o| o.purpose == OrderPurpose::Open) {
            execute_order(&mut state, order, t, series, costs);
        }
        pending.clear();

        // 2. Decide today's actions. The last day books no new orders.
        let is_last = di + 1 == dates.len();
        if !is_last {
            for entry in portfolio.entries() {
                let ticker = entry.ticker.as_str();
                let Some(bar) = series.get(ticker).and_then(|s| s.bar_on(t)) else {
                    state
                        .warnings
                        .push(format!("{t} {ticker}: no bar on decision day, holding"));
                    continue;
                };
                let inputs = signals.get(ticker, t);
                let (record, orders) =
                    step_asset(&state, ticker, t, bar.close, inputs, params);
                actions.push(record);
                pending.extend(orders);
            }
        }

        // 3. Mark to market at the close.
        let mut position_value = 0.0;
        for (ticker, &shares) in &state.positions {
            let Some(bar) = series.get(ticker).and_then(|s| s.bar_on(t)) else {
                continue; // inherited position with a data gap: value carried as 0 today
            };
            position_value += shares as f64 * bar.close;
        }
        let equity = state.cash + position_value;
        if !equity.is_finite() {
            return Err(EngineError::NonFiniteEquity {
                date: t,
                cash: state.cash,
                positions: state.positions_snapshot(),
            });
        }
        equity_curve.push(EquityPoint { date: t, cash: state.cash, position_value, equity });
    }

    let final_equity = equity_curve.last().map(|p| p.equity).unwrap_or(initial_capital);
    Ok(BacktestResult {
        initial_capital,
        final_equity,
        cumulative_return_pct: (final_equity / initial_capital - 1.0) * 100.0,
        equity_curve,
        fills: state.fills,
        actions,
        warnings: state.warnings,
    })
}
