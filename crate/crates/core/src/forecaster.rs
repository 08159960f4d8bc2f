//! Windowed next-day price forecasting.
//!
//! Two interchangeable forecasters sit behind [`PriceForecaster`]:
//!
//! - [`LstmForecaster`]: a from-scratch single-layer LSTM over a rolling
//!   window of normalized OHLCV rows, with a linear head predicting the next
//!   day's normalized close. Trained per ticker by full-batch gradient
//!   descent on MSE with backtracking step halving, so the recorded training
//!   loss is non-increasing by construction. Training and inference are
//!   deterministic given (data, config, seed).
//! - [`PersistenceForecaster`]: predicts tomorrow's close = today's close.
//!   The zero-information baseline; its directional delta is exactly 0.
//!
//! Cell equations per step (sigmoid gates, tanh candidate):
//! `i,f,o = sigmoid(Wx·x + Wh·h + b)`, `g = tanh(...)`,
//! `c' = f∘c + i∘g`, `h' = o∘tanh(c')`, prediction `y = w·h_T + b_out`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::BarSeries;

/// Floor for normalization scales so constant windows stay finite.
const SCALE_FLOOR: f64 = 1e-12;
/// Parameter init range (uniform, seeded).
const INIT_RANGE: f64 = 0.1;
/// Maximum step halvings per epoch before the update is skipped.
const MAX_HALVINGS: u32 = 30;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid forecaster config: {0}")]
    InvalidConfig(String),
    #[error("{ticker}: not enough history at {date}: have {have} bars, need {need}")]
    InsufficientHistory {
        ticker: String,
        date: NaiveDate,
        have: usize,
        need: usize,
    },
    #[error("{ticker}: no training samples (need at least window+1 bars)")]
    NoTrainingSamples { ticker: String },
    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): loss is not finite")]
    TrainDiverged { epoch: usize, learning_rate: f64 },
    #[error("window shape mismatch: model expects {expected} rows, window has {got}")]
    WindowShape { expected: usize, got: usize },
    #[error("forecast is not finite for {ticker} at {date}")]
    NonFinite { ticker: String, date: NaiveDate },
    #[error("no model trained for ticker {0}")]
    MissingModel(String),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error("normalization range [{start}, {end}] selects no bars for {ticker}")]
    EmptyNormalizationRange {
        ticker: String,
        start: NaiveDate,
        end: NaiveDate,
    },
}

/// How window columns are scaled before they reach the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Normalization {
    /// Each column z-scored with the window's own mean/std (std floored).
    ZScorePerWindow,
    /// Min-max scaling with per-column extremes taken over a fixed date
    /// range (typically the training range), so test windows reuse the
    /// training scale.
    MinMaxRange { start: NaiveDate, end: NaiveDate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterConfig {
    /// Input window length in trading days.
    pub window: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub normalization: Normalization,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            window: 50,
            hidden_size: 16,
            epochs: 200,
            learning_rate: 0.05,
            seed: 42,
            normalization: Normalization::ZScorePerWindow,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.window == 0 {
            return Err(ForecastError::InvalidConfig("window must be >= 1".into()));
        }
        if self.hidden_size == 0 {
            return Err(ForecastError::InvalidConfig("hidden_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(ForecastError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ForecastError::InvalidConfig(
                "learning_rate must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// A normalized model input window ending at `end_date`, plus the affine
/// transform that maps a normalized close back to price space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub ticker: String,
    pub end_date: NaiveDate,
    /// `window` rows of normalized (open, high, low, close, volume).
    pub rows: Vec<[f64; 5]>,
    /// raw_close = normalized * close_scale + close_offset
    pub close_offset: f64,
    pub close_scale: f64,
    /// The unnormalized close at `end_date` (the reference price P_t).
    pub last_close: f64,
}

/// Per-column affine scalers: normalized = (raw - offset) / scale.
struct ColumnScalers {
    offset: [f64; 5],
    scale: [f64; 5],
}

fn raw_row(bar: &crate::market_data::Bar) -> [f64; 5] {
    [bar.open, bar.high, bar.low, bar.close, bar.volume]
}

fn zscore_scalers(rows: &[[f64; 5]]) -> ColumnScalers {
    let n = rows.len() as f64;
    let mut offset = [0.0; 5];
    let mut scale = [0.0; 5];
    for c in 0..5 {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        offset[c] = mean;
        scale[c] = var.sqrt().max(SCALE_FLOOR);
    }
    ColumnScalers { offset, scale }
}

fn minmax_scalers(
    series: &BarSeries,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<ColumnScalers, ForecastError> {
    let rows: Vec<[f64; 5]> = series
        .bars()
        .iter()
        .filter(|b| b.date >= start && b.date <= end)
        .map(raw_row)
        .collect();
    if rows.is_empty() {
        return Err(ForecastError::EmptyNormalizationRange {
            ticker: series.ticker.clone(),
            start,
            end,
        });
    }
    let mut offset = [0.0; 5];
    let mut scale = [0.0; 5];
    for c in 0..5 {
        let min = rows.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
        offset[c] = min;
        scale[c] = (max - min).max(SCALE_FLOOR);
    }
    Ok(ColumnScalers { offset, scale })
}

/// Build the normalized input window ending at trading day `t` (inclusive),
/// using only bars dated `<= t`.
pub fn make_window(
    series: &BarSeries,
    t: NaiveDate,
    config: &ForecasterConfig,
) -> Result<FeatureWindow, ForecastError> {
    config.validate()?;
    let bars = series.bars_through(t);
    if bars.len() < config.window {
        return Err(ForecastError::InsufficientHistory {
            ticker: series.ticker.clone(),
            date: t,
            have: bars.len(),
            need: config.window,
        });
    }
    let tail = &bars[bars.len() - config.window..];
    let raw: Vec<[f64; 5]> = tail.iter().map(raw_row).collect();
    let scalers = match &config.normalization {
        Normalization::ZScorePerWindow => zscore_scalers(&raw),
        Normalization::MinMaxRange { start, end } => minmax_scalers(series, *start, *end)?,
    };
    let rows = raw
        .iter()
        .map(|r| {
            let mut out = [0.0; 5];
            for c in 0..5 {
                out[c] = (r[c] - scalers.offset[c]) / scalers.scale[c];
            }
            out
        })
        .collect();
    Ok(FeatureWindow {
        ticker: series.ticker.clone(),
        end_date: tail[tail.len() - 1].date,
        rows,
        close_offset: scalers.offset[3],
        close_scale: scalers.scale[3],
        last_close: tail[tail.len() - 1].close,
    })
}

/// Directional forecast signal: the relative move implied by a forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSignal {
    pub ticker: String,
    pub date: NaiveDate,
    pub forecast: f64,
    pub last_close: f64,
    /// (forecast - last_close) / last_close
    pub delta: f64,
}

pub fn directional_signal(
    ticker: &str,
    date: NaiveDate,
    forecast: f64,
    last_close: f64,
) -> PriceSignal {
    PriceSignal {
        ticker: ticker.to_string(),
        date,
        forecast,
        last_close,
        delta: (forecast - last_close) / last_close,
    }
}

// ---------------------------------------------------------------------------
// LSTM parameters and math

/// Row-major matrix, sized at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        Self { rows, cols, data }
    }

    /// out += A · x
    fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[r] += acc;
        }
    }

    /// out += Aᵀ · x
    fn matvec_t_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (c, a) in row.iter().enumerate() {
                out[c] += a * x[r];
            }
        }
    }

    /// A += outer(u, v)
    fn outer_acc(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (c, rv) in row.iter_mut().enumerate() {
                *rv += u[r] * v[c];
            }
        }
    }
}

/// All trainable parameters. Gate rows are stacked `[input; forget;
/// candidate; output]`, so `wx` is (4H x 5), `wh` is (4H x H), `b` is 4H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LstmParams {
    wx: Mat,
    wh: Mat,
    b: Vec<f64>,
    head_w: Vec<f64>,
    head_b: f64,
}

impl LstmParams {
    fn init(hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        // Field order is fixed: it defines the RNG consumption order and
        // therefore the seeded init.
        let wx = Mat::uniform(rng, 4 * hidden, 5);
        let wh = Mat::uniform(rng, 4 * hidden, hidden);
        let b = (0..4 * hidden)
            .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        let head_w = (0..hidden)
            .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        let head_b = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        Self { wx, wh, b, head_w, head_b }
    }

    fn zeros_like(&self) -> Self {
        Self {
            wx: Mat::zeros(self.wx.rows, self.wx.cols),
            wh: Mat::zeros(self.wh.rows, self.wh.cols),
            b: vec![0.0; self.b.len()],
            head_w: vec![0.0; self.head_w.len()],
            head_b: 0.0,
        }
    }

    fn hidden(&self) -> usize {
        self.head_w.len()
    }

    /// Flat parameter view in a fixed order (wx, wh, b, head_w, head_b).
    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(
            self.wx.data.len() + self.wh.data.len() + self.b.len() + self.head_w.len() + 1,
        );
        out.extend_from_slice(&self.wx.data);
        out.extend_from_slice(&self.wh.data);
        out.extend_from_slice(&self.b);
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for dst in [
            &mut self.wx.data,
            &mut self.wh.data,
            &mut self.b,
            &mut self.head_w,
        ] {
            let n = dst.len();
            dst.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        self.head_b = flat[i];
    }

    fn step(&mut self, grad: &Self, lr: f64) {
        for (p, g) in self.wx.data.iter_mut().zip(&grad.wx.data) {
            *p -= lr * g;
        }
        for (p, g) in self.wh.data.iter_mut().zip(&grad.wh.data) {
            *p -= lr * g;
        }
        for (p, g) in self.b.iter_mut().zip(&grad.b) {
            *p -= lr * g;
        }
        for (p, g) in self.head_w.iter_mut().zip(&grad.head_w) {
            *p -= lr * g;
        }
        self.head_b -= lr * grad.head_b;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-timestep activations cached by the forward pass for backprop.
struct StepCache {
    gates: Vec<f64>, // i|f|g|o, post-activation, length 4H
    tanh_c: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
}

/// Forward pass for one sample; returns the prediction and, when `cache` is
/// requested, the activations needed for the backward pass.
fn forward(params: &LstmParams, xs: &[[f64; 5]], want_cache: bool) -> (f64, Vec<StepCache>) {
    let hidden = params.hidden();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut caches = Vec::with_capacity(if want_cache { xs.len() } else { 0 });
    for x in xs {
        let mut a = params.b.clone();
        params.wx.matvec_acc(x, &mut a);
        params.wh.matvec_acc(&h, &mut a);
        let h_prev = h.clone();
        let c_prev = c.clone();
        let mut gates = a;
        for j in 0..hidden {
            gates[j] = sigmoid(gates[j]); // input
            gates[hidden + j] = sigmoid(gates[hidden + j]); // forget
            gates[2 * hidden + j] = gates[2 * hidden + j].tanh(); // candidate
            gates[3 * hidden + j] = sigmoid(gates[3 * hidden + j]); // output
        }
        let mut tanh_c = vec![0.0; hidden];
        for j in 0..hidden {
            c[j] = gates[hidden + j] * c_prev[j] + gates[j] * gates[2 * hidden + j];
            tanh_c[j] = c[j].tanh();
            h[j] = gates[3 * hidden + j] * tanh_c[j];
        }
        if want_cache {
            caches.push(StepCache { gates, tanh_c, h_prev, c_prev });
        }
    }
    let mut y = params.head_b;
    for j in 0..hidden {
        y += params.head_w[j] * h[j];
    }
    (y, caches)
}

/// One (window, next normalized close) training pair.
struct TrainSample {
    xs: Vec<[f64; 5]>,
    y: f64,
}

/// Full-batch MSE loss and analytic gradient via backprop through time.
fn loss_and_grad(params: &LstmParams, samples: &[TrainSample]) -> (f64, LstmParams) {
    let hidden = params.hidden();
    let n = samples.len() as f64;
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    for sample in samples {
        let (y_hat, caches) = forward(params, &sample.xs, true);
        let err = y_hat - sample.y;
        loss += err * err / n;
        let dy = 2.0 * err / n;

        let last_h: Vec<f64> = caches
            .last()
            .map(|c| {
                (0..hidden)
                    .map(|j| c.gates[3 * hidden + j] * c.tanh_c[j])
                    .collect()
            })
            .unwrap_or_else(|| vec![0.0; hidden]);
        for j in 0..hidden {
            grad.head_w[j] += dy * last_h[j];
        }
        grad.head_b += dy;

        let mut dh: Vec<f64> = params.head_w.iter().map(|w| dy * w).collect();
        let mut dc = vec![0.0; hidden];
        for (t, cache) in caches.iter().enumerate().rev() {
            let g = &cache.gates;
            let mut da = vec![0.0; 4 * hidden];
            for j in 0..hidden {
                let i_g = g[j];
                let f_g = g[hidden + j];
                let g_g = g[2 * hidden + j];
                let o_g = g[3 * hidden + j];
                let d_out = dh[j] * cache.tanh_c[j];
                da[3 * hidden + j] = d_out * o_g * (1.0 - o_g);
                dc[j] += dh[j] * o_g * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
                let d_in = dc[j] * g_g;
                da[j] = d_in * i_g * (1.0 - i_g);
                let d_forget = dc[j] * cache.c_prev[j];
                da[hidden + j] = d_forget * f_g * (1.0 - f_g);
                let d_cand = dc[j] * i_g;
                da[2 * hidden + j] = d_cand * (1.0 - g_g * g_g);
            }
            grad.wx.outer_acc(&da, &sample.xs[t]);
            grad.wh.outer_acc(&da, &cache.h_prev);
            for (b, d) in grad.b.iter_mut().zip(&da) {
                *b += d;
            }
            let mut dh_prev = vec![0.0; hidden];
            params.wh.matvec_t_acc(&da, &mut dh_prev);
            dh = dh_prev;
            for j in 0..hidden {
                dc[j] *= g[hidden + j];
            }
        }
    }
    (loss, grad)
}

// ---------------------------------------------------------------------------
// Trained model

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A trained per-ticker LSTM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub ticker: String,
    pub config: ForecasterConfig,
    params: LstmParams,
    pub final_loss: f64,
    /// Full-batch loss after each epoch; non-increasing by construction.
    pub loss_history: Vec<f64>,
}

/// Build the training set: every window of `config.window` bars dated
/// `<= train_end` paired with the next bar's normalized close.
fn build_samples(
    series: &BarSeries,
    train_end: NaiveDate,
    config: &ForecasterConfig,
) -> Result<Vec<TrainSample>, ForecastError> {
    let bars = series.bars_through(train_end);
    if bars.len() < config.window + 1 {
        return Err(ForecastError::NoTrainingSamples { ticker: series.ticker.clone() });
    }
    let mut samples = Vec::new();
    for end in (config.window - 1)..(bars.len() - 1) {
        let window_bars = &bars[end + 1 - config.window..=end];
        let raw: Vec<[f64; 5]> = window_bars.iter().map(raw_row).collect();
        let scalers = match &config.normalization {
            Normalization::ZScorePerWindow => zscore_scalers(&raw),
            Normalization::MinMaxRange { start, end } => minmax_scalers(series, *start, *end)?,
        };
        let xs = raw
            .iter()
            .map(|r| {
                let mut out = [0.0; 5];
                for c in 0..5 {
                    out[c] = (r[c] - scalers.offset[c]) / scalers.scale[c];
                }
                out
            })
            .collect();
        let y = (bars[end + 1].close - scalers.offset[3]) / scalers.scale[3];
        samples.push(TrainSample { xs, y });
    }
    Ok(samples)
}

/// Backprop self-check: the maximum relative disagreement between the
/// analytic gradient and central finite differences, at freshly seeded
/// parameters, over the training batch built from `series`.
///
/// The finite-difference quotient carries roughly `eps * |loss| / (2h)` of
/// floating-point roundoff, so components whose absolute disagreement is
/// below `1e-9` are treated as exact matches; every larger component
/// contributes its relative error. A correct backward pass stays well under
/// `1e-4`; a defect in any gate's chain rule shows up orders of magnitude
/// above it.
pub fn gradient_check_max_rel_error(
    series: &BarSeries,
    config: &ForecasterConfig,
) -> Result<f64, ForecastError> {
    config.validate()?;
    let samples = build_samples(series, series.last_date(), config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::init(config.hidden_size, &mut rng);
    let (_, grad) = loss_and_grad(&params, &samples);
    let analytic = grad.to_flat();
    let theta = params.to_flat();
    let mut max_rel = 0.0f64;
    for (idx, a) in analytic.iter().enumerate() {
        let h = 1e-5 * theta[idx].abs().max(1.0);
        let mut plus = theta.clone();
        plus[idx] += h;
        params.set_flat(&plus);
        let (lp, _) = loss_and_grad(&params, &samples);
        let mut minus = theta.clone();
        minus[idx] -= h;
        params.set_flat(&minus);
        let (lm, _) = loss_and_grad(&params, &samples);
        params.set_flat(&theta);
        let numeric = (lp - lm) / (2.0 * h);
        let abs_err = (a - numeric).abs();
        if abs_err < 1e-9 {
            continue;
        }
        max_rel = max_rel.max(abs_err / (a.abs() + numeric.abs()).max(1e-8));
    }
    Ok(max_rel)
}

/// Train one per-ticker model on bars dated `<= train_end`.
///
/// Plain full-batch gradient descent; when a step would increase the
/// full-batch loss the step size is halved (up to [`MAX_HALVINGS`]) and the
/// update is skipped entirely if it still increases, so the per-epoch loss
/// history never goes up.
pub fn train(
    series: &BarSeries,
    train_end: NaiveDate,
    config: &ForecasterConfig,
) -> Result<LstmModel, ForecastError> {
    config.validate()?;
    let samples = build_samples(series, train_end, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::init(config.hidden_size, &mut rng);

    let (mut loss, mut grad) = loss_and_grad(&params, &samples);
    if !loss.is_finite() {
        return Err(ForecastError::TrainDiverged { epoch: 0, learning_rate: config.learning_rate });
    }
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut lr = config.learning_rate;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let mut candidate = params.clone();
            candidate.step(&grad, lr);
            let (cand_loss, cand_grad) = loss_and_grad(&candidate, &samples);
            if !cand_loss.is_finite() {
                return Err(ForecastError::TrainDiverged { epoch, learning_rate: lr });
            }
            if cand_loss <= loss {
                params = candidate;
                loss = cand_loss;
                grad = cand_grad;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        // No acceptable step: keep parameters, loss stays flat.
        let _ = accepted;
        history.push(loss);
    }
    Ok(LstmModel {
        ticker: series.ticker.clone(),
        config: config.clone(),
        final_loss: loss,
        loss_history: history,
        params,
    })
}

/// Predict the next close in price space for a prepared window.
pub fn forecast(model: &LstmModel, window: &FeatureWindow) -> Result<f64, ForecastError> {
    if window.rows.len() != model.config.window {
        return Err(ForecastError::WindowShape {
            expected: model.config.window,
            got: window.rows.len(),
        });
    }
    let (y_norm, _) = forward(&model.params, &window.rows, false);
    let price = y_norm * window.close_scale + window.close_offset;
    if !price.is_finite() {
        return Err(ForecastError::NonFinite {
            ticker: window.ticker.clone(),
            date: window.end_date,
        });
    }
    Ok(price)
}

/// Tomorrow's close = today's close.
pub fn persistence_forecast(series: &BarSeries, t: NaiveDate) -> Result<f64, ForecastError> {
    let bars = series.bars_through(t);
    match bars.last() {
        Some(bar) => Ok(bar.close),
        None => Err(ForecastError::InsufficientHistory {
            ticker: series.ticker.clone(),
            date: t,
            have: 0,
            need: 1,
        }),
    }
}

// ---------------------------------------------------------------------------
// Common interface

/// Which forecaster a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    #[default]
    Lstm,
    Persistence,
}

/// A forecaster produces tomorrow's expected close from history up to `t`.
pub trait PriceForecaster {
    fn predict(&self, series: &BarSeries, t: NaiveDate) -> Result<f64, ForecastError>;

    /// The input history length needed before predictions start.
    fn min_history(&self) -> usize;
}

pub struct PersistenceForecaster;

impl PriceForecaster for PersistenceForecaster {
    fn predict(&self, series: &BarSeries, t: NaiveDate) -> Result<f64, ForecastError> {
        persistence_forecast(series, t)
    }

    fn min_history(&self) -> usize {
        1
    }
}

/// A bundle of per-ticker trained models.
pub struct LstmForecaster {
    models: BTreeMap<String, LstmModel>,
}

impl LstmForecaster {
    /// Train one model per series on bars dated `<= train_end`.
    pub fn train_all(
        series: &[BarSeries],
        train_end: NaiveDate,
        config: &ForecasterConfig,
    ) -> Result<Self, ForecastError> {
        let mut models = BTreeMap::new();
        for s in series {
            models.insert(s.ticker.clone(), train(s, train_end, config)?);
        }
        Ok(Self { models })
    }

    pub fn from_models(models: Vec<LstmModel>) -> Self {
        Self {
            models: models.into_iter().map(|m| (m.ticker.clone(), m)).collect(),
        }
    }

    pub fn model(&self, ticker: &str) -> Option<&LstmModel> {
        self.models.get(ticker)
    }

    pub fn save(&self, path: &Path) -> Result<(), ForecastError> {
        let checkpoint = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            models: self.models.values().cloned().collect(),
        };
        let json = serde_json::to_string_pretty(&checkpoint).expect("checkpoint serializes");
        std::fs::write(path, json).map_err(|e| ForecastError::Checkpoint {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ForecastError> {
        let json = std::fs::read_to_string(path).map_err(|e| ForecastError::Checkpoint {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let checkpoint: Checkpoint =
            serde_json::from_str(&json).map_err(|e| ForecastError::Checkpoint {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?;
        if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ForecastError::Checkpoint {
                path: path.display().to_string(),
                msg: format!(
                    "unsupported format version {} (expected {})",
                    checkpoint.format_version, CHECKPOINT_FORMAT_VERSION
                ),
            });
        }
        Ok(Self::from_models(checkpoint.models))
    }
}

impl PriceForecaster for LstmForecaster {
    fn predict(&self, series: &BarSeries, t: NaiveDate) -> Result<f64, ForecastError> {
        let model = self
            .models
            .get(&series.ticker)
            .ok_or_else(|| ForecastError::MissingModel(series.ticker.clone()))?;
        let window = make_window(series, t, &model.config)?;
        forecast(model, &window)
    }

    fn min_history(&self) -> usize {
        self.models
            .values()
            .map(|m| m.config.window)
            .max()
            .unwrap_or(1)
    }
}

/// Versioned on-disk model bundle.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    models: Vec<LstmModel>,
}
