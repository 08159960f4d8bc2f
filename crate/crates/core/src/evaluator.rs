//! Paired clean-vs-attacked evaluation.
//!
//! A sweep runs the clean backtest once, then for every (attack kind,
//! target) pair rebuilds only the news half of the pipeline on the attacked
//! store and reruns the engine. The price-delta grid never depends on
//! headlines, so it is computed once and shared. Each pair yields one
//! [`EvalRecord`] with the sentiment dent, decision changes, and the
//! money-metric difference `delta_cr_pp` (attacked CR minus clean CR, in
//! percentage points).
//!
//! Targets are independent, so the sweep is data-parallel: with the
//! `parallel` feature (on by default) the records are computed on a rayon
//! pool, optionally capped to a thread count; a sequential path remains
//! available for benchmarking and for builds without the feature. Records
//! are sorted by (kind, ticker, date) afterwards, so the execution mode
//! never changes the output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    apply_attack, enumerate_targets, AdversaryError, AttackKind, AttackSpec, HiddenTextConfig,
    HomoglyphTable, Target, TouchedPair,
};
use crate::engine::{Action, BacktestResult, EquityPoint};
use crate::forecaster::PriceForecaster;
use crate::market_data::{BarSeries, Calendar, Portfolio};
use crate::news::{HeadlineStore, Lexicon};
use crate::pipeline::{
    compute_price_deltas, run_with_deltas, NewsComputation, PipelineError, PriceDeltas, RunOutput,
    RunSettings,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

/// Money difference implied by a CR difference on `initial_capital`:
/// a -1.72pp swing on $1,000,000 is exactly -$17,200.
pub fn dollar_impact(initial_capital: f64, delta_cr_pp: f64) -> f64 {
    initial_capital * (delta_cr_pp / 100.0)
}

// ---------------------------------------------------------------------------
// Per-target records

/// Outcome of one clean-vs-attacked pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub kind: AttackKind,
    pub ticker: String,
    pub date: NaiveDate,
    /// Headlines the transform addressed. For the identity calibration kind
    /// these are carried through unchanged; for real attacks they were
    /// rewritten.
    pub headlines_touched: usize,
    /// Target headlines the transform could not change (e.g. no verbatim
    /// entity occurrence to substitute).
    pub no_ops: usize,
    /// Store-wide association failures in each arm.
    pub routing_failures_clean: usize,
    pub routing_failures_attacked: usize,
    /// Mean polarity of the target (ticker, day) cell; None = no scored news.
    pub day_mean_clean: Option<f64>,
    pub day_mean_attacked: Option<f64>,
    /// attacked mean - clean mean, undefined cells read as 0.
    pub day_sentiment_delta: f64,
    /// Smoothed signal actually fed to the strategy on the target day.
    pub smoothed_clean: f64,
    pub smoothed_attacked: f64,
    pub action_clean: Action,
    pub action_attacked: Action,
    /// Strict sign reversal at the target (long <-> short).
    pub action_flip: bool,
    /// Any decision anywhere in the run differs.
    pub downstream_divergence: bool,
    pub clean_cr_pct: f64,
    pub attacked_cr_pct: f64,
    /// attacked CR - clean CR, percentage points.
    pub delta_cr_pp: f64,
    pub dollar_impact: f64,
}

/// Shared read-only inputs of a sweep.
#[derive(Clone, Copy)]
pub struct SweepInputs<'a> {
    pub calendar: &'a Calendar,
    pub series: &'a BTreeMap<String, BarSeries>,
    pub portfolio: &'a Portfolio,
    pub store: &'a HeadlineStore,
    pub lexicon: &'a Lexicon,
    pub table: &'a HomoglyphTable,
}

/// How sweep jobs are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// rayon data-parallel; `threads: None` uses the pool default. Without
    /// the `parallel` feature this degrades to the sequential path.
    Parallel { threads: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { threads: None }
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub kinds: Vec<AttackKind>,
    pub settings: RunSettings,
    pub hidden: HiddenTextConfig,
    pub execution: Execution,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kinds: vec![AttackKind::Homoglyph, AttackKind::HiddenText, AttackKind::Identity],
            settings: RunSettings::default(),
            hidden: HiddenTextConfig::default(),
            execution: Execution::default(),
        }
    }
}

/// headline id -> associated ticker, as the attack planner expects it.
pub fn association_map(news: &NewsComputation) -> BTreeMap<String, Option<String>> {
    news.associations
        .iter()
        .map(|a| (a.headline_id.clone(), a.ticker().map(str::to_string)))
        .collect()
}

fn action_at(result: &BacktestResult, ticker: &str, date: NaiveDate) -> Action {
    result
        .actions
        .iter()
        .find(|a| a.signal.ticker == ticker && a.signal.date == date)
        .map(|a| a.action)
        .unwrap_or(Action::Hold)
}

fn decisions_differ(a: &BacktestResult, b: &BacktestResult) -> bool {
    if a.actions.len() != b.actions.len() {
        return true;
    }
    a.actions.iter().zip(&b.actions).any(|(x, y)| {
        x.signal.ticker != y.signal.ticker
            || x.signal.date != y.signal.date
            || x.action != y.action
            || x.target_shares != y.target_shares
    })
}

fn is_flip(clean: Action, attacked: Action) -> bool {
    matches!(
        (clean, attacked),
        (Action::Long, Action::Short) | (Action::Short, Action::Long)
    )
}

/// Attack one target against an already-computed clean run.
#[allow(clippy::too_many_arguments)]
fn attacked_record(
    spec: &AttackSpec,
    inputs: &SweepInputs,
    deltas: &PriceDeltas,
    clean: &RunOutput,
    associations: &BTreeMap<String, Option<String>>,
    settings: &RunSettings,
    hidden: &HiddenTextConfig,
) -> Result<(EvalRecord, RunOutput, Vec<TouchedPair>), EvalError> {
    let applied = apply_attack(spec, inputs.store, associations, inputs.portfolio, inputs.table, hidden)?;
    let attacked = run_with_deltas(
        inputs.calendar,
        inputs.series,
        inputs.portfolio,
        &applied.store,
        deltas,
        inputs.lexicon,
        inputs.table,
        settings,
    )?;
    let key = (spec.ticker.clone(), spec.date);
    let day_mean_clean = clean.news.daily.get(&key).and_then(|c| c.mean);
    let day_mean_attacked = attacked.news.daily.get(&key).and_then(|c| c.mean);
    let smoothed_clean = clean.news.smoothed.get(&key).copied().unwrap_or(0.0);
    let smoothed_attacked = attacked.news.smoothed.get(&key).copied().unwrap_or(0.0);
    let action_clean = action_at(&clean.backtest, &spec.ticker, spec.date);
    let action_attacked = action_at(&attacked.backtest, &spec.ticker, spec.date);
    let clean_cr = clean.backtest.cumulative_return_pct;
    let attacked_cr = attacked.backtest.cumulative_return_pct;
    let delta_cr_pp = attacked_cr - clean_cr;
    let record = EvalRecord {
        kind: spec.kind,
        ticker: spec.ticker.clone(),
        date: spec.date,
        headlines_touched: applied.touched.len(),
        no_ops: applied.no_ops,
        routing_failures_clean: clean.news.routing_failures,
        routing_failures_attacked: attacked.news.routing_failures,
        day_mean_clean,
        day_mean_attacked,
        day_sentiment_delta: day_mean_attacked.unwrap_or(0.0) - day_mean_clean.unwrap_or(0.0),
        smoothed_clean,
        smoothed_attacked,
        action_clean,
        action_attacked,
        action_flip: is_flip(action_clean, action_attacked),
        downstream_divergence: decisions_differ(&clean.backtest, &attacked.backtest),
        clean_cr_pct: clean_cr,
        attacked_cr_pct: attacked_cr,
        delta_cr_pp,
        dollar_impact: dollar_impact(settings.initial_capital, delta_cr_pp),
    };
    Ok((record, attacked, applied.touched))
}

/// One fully-materialized clean/attacked pair, for drill-down artifacts.
pub struct PairedOutcome {
    pub clean: RunOutput,
    pub attacked: RunOutput,
    pub touched: Vec<TouchedPair>,
    pub record: EvalRecord,
}

/// Run one attack spec end to end, computing the clean arm too.
pub fn paired_run(
    spec: &AttackSpec,
    inputs: &SweepInputs,
    forecaster: &dyn PriceForecaster,
    settings: &RunSettings,
    hidden: &HiddenTextConfig,
) -> Result<PairedOutcome, EvalError> {
    let deltas = compute_price_deltas(forecaster, inputs.series, inputs.portfolio, inputs.calendar)?;
    let clean = run_with_deltas(
        inputs.calendar,
        inputs.series,
        inputs.portfolio,
        inputs.store,
        &deltas,
        inputs.lexicon,
        inputs.table,
        settings,
    )?;
    let associations = association_map(&clean.news);
    let (record, attacked, touched) =
        attacked_record(spec, inputs, &deltas, &clean, &associations, settings, hidden)?;
    Ok(PairedOutcome { clean, attacked, touched, record })
}

// ---------------------------------------------------------------------------
// Sweep

fn run_jobs<J, T, F>(jobs: &[J], f: F, execution: Execution) -> Result<Vec<T>, EvalError>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T, EvalError> + Sync,
{
    match execution {
        Execution::Sequential => jobs.iter().map(&f).collect(),
        Execution::Parallel { threads } => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                match threads {
                    Some(n) => {
                        let pool = rayon::ThreadPoolBuilder::new()
                            .num_threads(n)
                            .build()
                            .expect("rayon pool construction");
                        pool.install(|| jobs.par_iter().map(&f).collect())
                    }
                    None => jobs.par_iter().map(&f).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            {
                let _ = threads;
                jobs.iter().map(&f).collect()
            }
        }
    }
}

/// Full report of one sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub initial_capital: f64,
    pub clean_cr_pct: f64,
    pub n_targets: usize,
    pub records: Vec<EvalRecord>,
    pub summaries: Vec<KindSummary>,
}

/// Enumerate every target with associated news, attack each with every
/// configured kind, and aggregate. The clean run is computed exactly once.
pub fn sweep(
    inputs: &SweepInputs,
    forecaster: &dyn PriceForecaster,
    config: &SweepConfig,
) -> Result<SweepReport, EvalError> {
    let deltas = compute_price_deltas(forecaster, inputs.series, inputs.portfolio, inputs.calendar)?;
    let clean = run_with_deltas(
        inputs.calendar,
        inputs.series,
        inputs.portfolio,
        inputs.store,
        &deltas,
        inputs.lexicon,
        inputs.table,
        &config.settings,
    )?;
    let associations = association_map(&clean.news);
    let targets = enumerate_targets(inputs.store, &associations, inputs.portfolio, inputs.calendar)?;
    let jobs: Vec<(AttackKind, &Target)> = config
        .kinds
        .iter()
        .flat_map(|&kind| targets.iter().map(move |t| (kind, t)))
        .collect();
    let run_one = |&(kind, target): &(AttackKind, &Target)| -> Result<EvalRecord, EvalError> {
        let spec = AttackSpec { kind, ticker: target.ticker.clone(), date: target.date };
        let (record, _, _) = attacked_record(
            &spec,
            inputs,
            &deltas,
            &clean,
            &associations,
            &config.settings,
            &config.hidden,
        )?;
        Ok(record)
    };
    let mut records = run_jobs(&jobs, run_one, config.execution)?;
    records.sort_by(|a, b| {
        (a.kind, &a.ticker, a.date).cmp(&(b.kind, &b.ticker, b.date))
    });
    let summaries = aggregate(&records);
    Ok(SweepReport {
        initial_capital: config.settings.initial_capital,
        clean_cr_pct: clean.backtest.cumulative_return_pct,
        n_targets: targets.len(),
        records,
        summaries,
    })
}

// ---------------------------------------------------------------------------
// Aggregation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetImpact {
    pub ticker: String,
    pub date: NaiveDate,
    pub delta_cr_pp: f64,
    pub dollar_impact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub n: usize,
    pub mean_delta_cr_pp: f64,
    pub action_flip_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeStratum {
    /// "low" / "mid" / "high" by target-day headline count.
    pub label: String,
    /// Upper headline-count bound of this stratum (inclusive).
    pub max_headlines: usize,
    pub stats: StratumStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: AttackKind,
    pub n_targets: usize,
    pub headlines_touched: usize,
    pub no_ops: usize,
    /// Fraction of targets where any decision anywhere changed.
    pub decision_change_rate: f64,
    /// Fraction of targets whose target-day action reversed sign.
    pub action_flip_rate: f64,
    /// Association failures introduced, over headlines touched.
    pub misrouting_rate: f64,
    pub mean_delta_cr_pp: f64,
    pub mean_abs_delta_cr_pp: f64,
    pub mean_dollar_impact: f64,
    pub worst: TargetImpact,
    pub best: TargetImpact,
    pub by_ticker: BTreeMap<String, StratumStats>,
    pub by_news_volume: Vec<VolumeStratum>,
}

fn stats_of(records: &[&EvalRecord]) -> StratumStats {
    let n = records.len();
    let mean = records.iter().map(|r| r.delta_cr_pp).sum::<f64>() / n as f64;
    let flips = records.iter().filter(|r| r.action_flip).count();
    StratumStats {
        n,
        mean_delta_cr_pp: mean,
        action_flip_rate: flips as f64 / n as f64,
    }
}

/// Volume of news at the target: transformed plus untransformable headlines.
fn volume_of(r: &EvalRecord) -> usize {
    r.headlines_touched + r.no_ops
}

fn volume_strata(records: &[&EvalRecord]) -> Vec<VolumeStratum> {
    let mut volumes: Vec<usize> = records.iter().map(|r| volume_of(r)).collect();
    volumes.sort_unstable();
    let n = volumes.len();
    // Value-based tercile bounds; ties land in the lower stratum.
    let q1 = volumes[(n - 1) / 3];
    let q2 = volumes[2 * (n - 1) / 3];
    let mut out = Vec::new();
    let mut bounds: Vec<(&str, usize)> = vec![("low", q1)];
    if q2 > q1 {
        bounds.push(("mid", q2));
    }
    let max = *volumes.last().expect("nonempty");
    if max > q2 {
        bounds.push(("high", max));
    }
    let mut lower = 0usize;
    for (label, upper) in bounds {
        let members: Vec<&EvalRecord> = records
            .iter()
            .copied()
            .filter(|r| {
                let v = volume_of(r);
                v > lower && v <= upper || (lower == 0 && v == 0)
            })
            .collect();
        if !members.is_empty() {
            out.push(VolumeStratum {
                label: label.to_string(),
                max_headlines: upper,
                stats: stats_of(&members),
            });
        }
        lower = upper;
    }
    out
}

/// Per-kind aggregation. `worst` minimizes delta CR (most money lost),
/// `best` maximizes it; `worst.delta_cr_pp <= mean <= best.delta_cr_pp`.
pub fn aggregate(records: &[EvalRecord]) -> Vec<KindSummary> {
    let mut by_kind: BTreeMap<AttackKind, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_kind.entry(r.kind).or_default().push(r);
    }
    by_kind
        .into_iter()
        .map(|(kind, group)| {
            let n = group.len();
            let worst_r = group
                .iter()
                .min_by(|a, b| a.delta_cr_pp.total_cmp(&b.delta_cr_pp))
                .expect("nonempty group");
            let best_r = group
                .iter()
                .max_by(|a, b| a.delta_cr_pp.total_cmp(&b.delta_cr_pp))
                .expect("nonempty group");
            let touched: usize = group.iter().map(|r| r.headlines_touched).sum();
            let introduced: usize = group
                .iter()
                .map(|r| r.routing_failures_attacked.saturating_sub(r.routing_failures_clean))
                .sum();
            let mut by_ticker: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
            for r in &group {
                by_ticker.entry(r.ticker.clone()).or_default().push(r);
            }
            KindSummary {
                kind,
                n_targets: n,
                headlines_touched: touched,
                no_ops: group.iter().map(|r| r.no_ops).sum(),
                decision_change_rate: group.iter().filter(|r| r.downstream_divergence).count()
                    as f64
                    / n as f64,
                action_flip_rate: group.iter().filter(|r| r.action_flip).count() as f64
                    / n as f64,
                misrouting_rate: if touched == 0 {
                    0.0
                } else {
                    introduced as f64 / touched as f64
                },
                mean_delta_cr_pp: group.iter().map(|r| r.delta_cr_pp).sum::<f64>() / n as f64,
                mean_abs_delta_cr_pp: group.iter().map(|r| r.delta_cr_pp.abs()).sum::<f64>()
                    / n as f64,
                mean_dollar_impact: group.iter().map(|r| r.dollar_impact).sum::<f64>() / n as f64,
                worst: TargetImpact {
                    ticker: worst_r.ticker.clone(),
                    date: worst_r.date,
                    delta_cr_pp: worst_r.delta_cr_pp,
                    dollar_impact: worst_r.dollar_impact,
                },
                best: TargetImpact {
                    ticker: best_r.ticker.clone(),
                    date: best_r.date,
                    delta_cr_pp: best_r.delta_cr_pp,
                    dollar_impact: best_r.dollar_impact,
                },
                by_ticker: by_ticker
                    .into_iter()
                    .map(|(t, rs)| (t, stats_of(&rs)))
                    .collect(),
                by_news_volume: volume_strata(&group),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Rendering

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV row per record, sorted by (kind, ticker, date).
    pub fn records_csv(&self) -> String {
        let mut out = String::from(
            "kind,ticker,date,headlines_touched,no_ops,routing_failures_clean,\
             routing_failures_attacked,day_mean_clean,day_mean_attacked,day_sentiment_delta,\
             smoothed_clean,smoothed_attacked,action_clean,action_attacked,action_flip,\
             downstream_divergence,clean_cr_pct,attacked_cr_pct,delta_cr_pp,dollar_impact\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.kind.as_str(),
                r.ticker,
                r.date,
                r.headlines_touched,
                r.no_ops,
                r.routing_failures_clean,
                r.routing_failures_attacked,
                opt(r.day_mean_clean),
                opt(r.day_mean_attacked),
                r.day_sentiment_delta,
                r.smoothed_clean,
                r.smoothed_attacked,
                r.action_clean.as_str(),
                r.action_attacked.as_str(),
                r.action_flip,
                r.downstream_divergence,
                r.clean_cr_pct,
                r.attacked_cr_pct,
                r.delta_cr_pp,
                r.dollar_impact
            );
        }
        out
    }

    /// Human-readable summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "attack sweep: {} targets, clean CR {:+.4}% on ${:.2}",
            self.n_targets, self.clean_cr_pct, self.initial_capital
        );
        for s in &self.summaries {
            let _ = writeln!(out, "\n== {} ==", s.kind.as_str());
            let _ = writeln!(
                out,
                "targets: {}   headlines touched: {} (no-ops: {})",
                s.n_targets, s.headlines_touched, s.no_ops
            );
            let _ = writeln!(
                out,
                "misrouting: {:.1}% of touched   target-day flips: {:.1}%   any-decision divergence: {:.1}%",
                100.0 * s.misrouting_rate,
                100.0 * s.action_flip_rate,
                100.0 * s.decision_change_rate
            );
            let _ = writeln!(
                out,
                "delta CR: mean {:+.4}pp   mean|.| {:.4}pp   mean dollar impact ${:+.2}",
                s.mean_delta_cr_pp, s.mean_abs_delta_cr_pp, s.mean_dollar_impact
            );
            let _ = writeln!(
                out,
                "worst: {} {}  {:+.4}pp (${:+.2})",
                s.worst.ticker, s.worst.date, s.worst.delta_cr_pp, s.worst.dollar_impact
            );
            let _ = writeln!(
                out,
                "best:  {} {}  {:+.4}pp (${:+.2})",
                s.best.ticker, s.best.date, s.best.delta_cr_pp, s.best.dollar_impact
            );
            let per_ticker: Vec<String> = s
                .by_ticker
                .iter()
                .map(|(t, st)| format!("{t} {:+.4}pp(n={})", st.mean_delta_cr_pp, st.n))
                .collect();
            let _ = writeln!(out, "per ticker: {}", per_ticker.join("  "));
            let strata: Vec<String> = s
                .by_news_volume
                .iter()
                .map(|v| {
                    format!(
                        "{}(<={} headlines): {:+.4}pp flips {:.0}% (n={})",
                        v.label,
                        v.max_headlines,
                        v.stats.mean_delta_cr_pp,
                        100.0 * v.stats.action_flip_rate,
                        v.stats.n
                    )
                })
                .collect();
            let _ = writeln!(out, "news volume: {}", strata.join("  "));
        }
        out
    }
}

/// Side-by-side equity curves (clean vs attacked share the calendar).
pub fn equity_pair_csv(clean: &[EquityPoint], attacked: &[EquityPoint]) -> String {
    let mut out = String::from("date,clean_equity,attacked_equity\n");
    for (c, a) in clean.iter().zip(attacked) {
        debug_assert_eq!(c.date, a.date);
        let _ = writeln!(out, "{},{},{}", c.date, c.equity, a.equity);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::PersistenceForecaster;
    use crate::market_data::{Bar, PortfolioEntry};
    use crate::news::Headline;

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

    const DATES: &[&str] = &[
        "2024-02-01",
        "2024-02-02",
        "2024-02-05",
        "2024-02-06",
        "2024-02-07",
    ];

    struct Fixture {
        calendar: Calendar,
        series: BTreeMap<String, BarSeries>,
        portfolio: Portfolio,
        store: HeadlineStore,
        table: HomoglyphTable,
    }

    impl Fixture {
        fn inputs(&self) -> SweepInputs<'_> {
            SweepInputs {
                calendar: &self.calendar,
                series: &self.series,
                portfolio: &self.portfolio,
                store: &self.store,
                lexicon: Lexicon::default_lexicon(),
                table: &self.table,
            }
        }
    }

    fn fixture() -> Fixture {
        let series = flat_series("AAPL", DATES, 100.0);
        let calendar =
            Calendar::build(std::slice::from_ref(&series), d("2024-02-01"), d("2024-02-07"))
                .unwrap();
        let mut map = BTreeMap::new();
        map.insert("AAPL".to_string(), series);
        let portfolio = Portfolio::new(vec![PortfolioEntry {
            ticker: "AAPL".into(),
            aliases: vec!["AAPL".into(), "Apple".into()],
        }])
        .unwrap();
        let store = HeadlineStore::new(vec![Headline {
            id: "h1".into(),
            date: d("2024-02-01"),
            raw_html: "Apple shares surge on strong results".into(),
            source: "test".into(),
        }])
        .unwrap();
        Fixture {
            calendar,
            series: map,
            portfolio,
            store,
            table: HomoglyphTable::default_confusables(),
        }
    }

    #[test]
    fn dollar_impact_is_exact_for_the_reference_pair() {
        assert_eq!(dollar_impact(1_000_000.0, -1.72), -17_200.0);
        assert_eq!(dollar_impact(1_000_000.0, 0.0), 0.0);
        assert!(dollar_impact(500_000.0, 2.0) == 10_000.0);
    }

    #[test]
    fn identity_sweep_is_all_zero() {
        let fx = fixture();
        let config = SweepConfig {
            kinds: vec![AttackKind::Identity],
            execution: Execution::Sequential,
            ..SweepConfig::default()
        };
        let report = sweep(&fx.inputs(), &PersistenceForecaster, &config).unwrap();
        assert_eq!(report.records.len(), 1);
        let r = &report.records[0];
        assert_eq!(r.delta_cr_pp, 0.0);
        assert_eq!(r.dollar_impact, 0.0);
        assert!(!r.downstream_divergence);
        assert!(!r.action_flip);
        assert_eq!(r.routing_failures_clean, r.routing_failures_attacked);
        assert_eq!(r.day_mean_clean, r.day_mean_attacked);
    }

    #[test]
    fn hidden_text_flips_the_target_day_action() {
        let fx = fixture();
        let spec = AttackSpec {
            kind: AttackKind::HiddenText,
            ticker: "AAPL".into(),
            date: d("2024-02-01"),
        };
        let outcome = paired_run(
            &spec,
            &fx.inputs(),
            &PersistenceForecaster,
            &RunSettings::default(),
            &HiddenTextConfig::default(),
        )
        .unwrap();
        let r = &outcome.record;
        assert_eq!(r.action_clean, Action::Long);
        assert_eq!(r.action_attacked, Action::Short);
        assert!(r.action_flip);
        assert!(r.downstream_divergence);
        assert!(r.day_sentiment_delta < 0.0, "payload drags the day mean down");
        assert_eq!(r.headlines_touched, 1);
        // Routing is untouched by this attack.
        assert_eq!(r.routing_failures_clean, r.routing_failures_attacked);
    }

    #[test]
    fn homoglyph_misroutes_and_neutralizes_the_day() {
        let fx = fixture();
        let spec = AttackSpec {
            kind: AttackKind::Homoglyph,
            ticker: "AAPL".into(),
            date: d("2024-02-01"),
        };
        let outcome = paired_run(
            &spec,
            &fx.inputs(),
            &PersistenceForecaster,
            &RunSettings::default(),
            &HiddenTextConfig::default(),
        )
        .unwrap();
        let r = &outcome.record;
        assert_eq!(r.routing_failures_clean, 0);
        assert_eq!(r.routing_failures_attacked, 1, "attacked headline routes nowhere");
        assert_eq!(r.day_mean_attacked, None, "no scored news remains on the day");
        assert_eq!(r.action_clean, Action::Long);
        assert_eq!(r.action_attacked, Action::Hold);
        assert!(!r.action_flip, "long->hold is a change but not a sign flip");
        assert!(r.downstream_divergence);
    }

    #[test]
    fn sweep_records_are_sorted_by_kind_then_ticker_then_date() {
        let fx = fixture();
        let config = SweepConfig {
            execution: Execution::Sequential,
            ..SweepConfig::default()
        };
        let report = sweep(&fx.inputs(), &PersistenceForecaster, &config).unwrap();
        assert_eq!(report.records.len(), 3, "3 kinds x 1 target");
        let kinds: Vec<AttackKind> = report.records.iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            vec![AttackKind::Homoglyph, AttackKind::HiddenText, AttackKind::Identity]
        );
        // Summaries hold the aggregate invariant.
        for s in &report.summaries {
            assert!(s.worst.delta_cr_pp <= s.mean_delta_cr_pp + 1e-12);
            assert!(s.mean_delta_cr_pp <= s.best.delta_cr_pp + 1e-12);
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_sweeps_agree_exactly() {
        let fx = fixture();
        let seq = sweep(
            &fx.inputs(),
            &PersistenceForecaster,
            &SweepConfig { execution: Execution::Sequential, ..SweepConfig::default() },
        )
        .unwrap();
        let par = sweep(
            &fx.inputs(),
            &PersistenceForecaster,
            &SweepConfig {
                execution: Execution::Parallel { threads: Some(4) },
                ..SweepConfig::default()
            },
        )
        .unwrap();
        assert_eq!(seq.records, par.records);
    }

    #[test]
    fn volume_strata_partition_all_records() {
        let fx = fixture();
        let report = sweep(
            &fx.inputs(),
            &PersistenceForecaster,
            &SweepConfig { execution: Execution::Sequential, ..SweepConfig::default() },
        )
        .unwrap();
        for s in &report.summaries {
            let total: usize = s.by_news_volume.iter().map(|v| v.stats.n).sum();
            assert_eq!(total, s.n_targets);
            let ticker_total: usize = s.by_ticker.values().map(|v| v.n).sum();
            assert_eq!(ticker_total, s.n_targets);
        }
    }

    #[test]
    fn report_outputs_are_well_formed() {
        let fx = fixture();
        let report = sweep(
            &fx.inputs(),
            &PersistenceForecaster,
            &SweepConfig { execution: Execution::Sequential, ..SweepConfig::default() },
        )
        .unwrap();
        let json = report.to_json();
        assert!(serde_json::from_str::<SweepReport>(&json).is_ok());
        let csv = report.records_csv();
        assert_eq!(csv.lines().count(), 1 + report.records.len());
        assert!(csv.starts_with("kind,ticker,date,"));
        let table = report.render_table();
        assert!(table.contains("== homoglyph =="));
        assert!(table.contains("== hidden_text =="));
        assert!(table.contains("== identity =="));
    }
}
