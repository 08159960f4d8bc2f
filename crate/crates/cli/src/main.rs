//! `ats` — evaluation harness for a news-driven trading pipeline.
//!
//! Subcommands cover the full workflow: emit deterministic demo fixtures,
//! run a single backtest (optionally through the sanitization defense or
//! against remote association/sentiment backends), apply one headline
//! attack and compare paired runs, sweep every attack target, rewrite a
//! headline store through the sanitizer, and re-render a saved sweep
//! report.
//!
//! Every command writes its artifacts plus a `manifest.json` carrying the
//! tool version and SHA-256 digests of the config and inputs, so any output
//! directory is self-describing. Failures print machine-readable JSON to
//! stderr (`{"error": ..., "problems": [...]}`) and exit non-zero; config
//! validation reports *all* problems at once.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ats_core::adversary::{AttackKind, AttackSpec, HiddenTextConfig, HomoglyphTable};
use ats_core::engine::{self, CostConfig, StrategyParams};
use ats_core::evaluator::{
    self, equity_pair_csv, Execution, SweepConfig, SweepInputs, SweepReport,
};
use ats_core::fixtures;
use ats_core::forecaster::{
    ForecasterConfig, ForecasterKind, LstmForecaster, PersistenceForecaster, PriceForecaster,
};
use ats_core::market_data::{load_ohlcv, BarSeries, Calendar, Portfolio, PortfolioEntry};
use ats_core::news::{
    aggregate_daily, associate_rule, score_sentiment_lexicon, smoothed_sentiment, Association,
    HeadlineStore, Lexicon, ScoredHeadline, SmoothingConfig,
};
use ats_core::pipeline::{
    build_signal_grid, compute_news_signals, compute_price_deltas, sanitize_store,
    NewsComputation, RunSettings,
};
use ats_core::remote::{EndpointConfig, RemoteClient};

// ---------------------------------------------------------------------------
// CLI surface

#[derive(Parser)]
#[command(
    name = "ats",
    version,
    about = "News-driven trading pipeline: backtests, headline attacks, paired evaluation sweeps, and sanitization."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in demo fixtures (prices, headlines, config) to a directory.
    Fixtures(FixturesArgs),
    /// Run one backtest and write equity/trade/action logs plus a summary.
    Backtest(BacktestArgs),
    /// Apply one attack to one (ticker, date) target and compare paired runs.
    Attack(AttackArgs),
    /// Attack every eligible target with every kind and aggregate the impact.
    Sweep(SweepArgs),
    /// Rewrite a headline store through the sanitizer, emitting detection reports.
    Sanitize(SanitizeArgs),
    /// Re-render the table and records CSV from a saved sweep report JSON.
    Report(ReportArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Directory of per-ticker OHLCV CSVs named <TICKER>.csv
    /// (header: date,open,high,low,close,volume).
    #[arg(long)]
    prices: PathBuf,
    /// Headline store in JSONL form ({"id","date","raw_html","source"}).
    #[arg(long)]
    headlines: PathBuf,
    /// Run configuration JSON; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the forecaster choice from the config.
    #[arg(long, value_enum)]
    forecaster: Option<ForecasterArg>,
    /// Override the forecaster training seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FixturesArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Run the sanitization defense over the store before the pipeline.
    #[arg(long)]
    sanitize: bool,
    /// Headline-to-ticker association backend.
    #[arg(long, value_enum, default_value_t = AssocArg::Rule)]
    assoc: AssocArg,
    /// Sentiment scoring backend.
    #[arg(long, value_enum, default_value_t = SentimentArg::Lexicon)]
    sentiment: SentimentArg,
    /// Base URL of the remote chat-completions endpoint.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    remote_url: String,
    /// Model name sent to the remote endpoint.
    #[arg(long, default_value = "default")]
    remote_model: String,
    /// Environment variable holding the remote bearer token.
    #[arg(long, default_value = "ATS_REMOTE_TOKEN")]
    auth_env: String,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Which manipulation to apply.
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Target ticker.
    #[arg(long)]
    ticker: String,
    /// Target day (YYYY-MM-DD).
    #[arg(long)]
    date: NaiveDate,
    /// Hidden-text payload override.
    #[arg(long)]
    payload: Option<String>,
    /// Evaluate with the sanitization defense enabled in both arms.
    #[arg(long)]
    sanitize: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Attack kinds to sweep (comma separated); default: all three.
    #[arg(long, value_enum, value_delimiter = ',')]
    kinds: Vec<KindArg>,
    /// Cap the worker thread count of the parallel sweep.
    #[arg(long, conflicts_with = "sequential")]
    jobs: Option<usize>,
    /// Force the sequential execution path.
    #[arg(long)]
    sequential: bool,
    /// Evaluate with the sanitization defense enabled in both arms.
    #[arg(long)]
    sanitize: bool,
}

#[derive(Args)]
struct SanitizeArgs {
    /// Headline store in JSONL form.
    #[arg(long)]
    headlines: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json written by `ats sweep`.
    #[arg(long)]
    report: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum KindArg {
    Homoglyph,
    HiddenText,
    Identity,
}

impl From<KindArg> for AttackKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Homoglyph => AttackKind::Homoglyph,
            KindArg::HiddenText => AttackKind::HiddenText,
            KindArg::Identity => AttackKind::Identity,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum ForecasterArg {
    Lstm,
    Persistence,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum AssocArg {
    Rule,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[clap(rename_all = "snake_case")]
enum SentimentArg {
    Lexicon,
    Remote,
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug)]
enum CliError {
    /// Config or argument problems; all of them, not just the first.
    Invalid(Vec<String>),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

#[derive(Serialize)]
struct ErrorReport {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    problems: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let report = match e {
            CliError::Invalid(problems) => ErrorReport {
                error: format!("invalid configuration ({} problem(s))", problems.len()),
                problems,
            },
            CliError::Other(err) => ErrorReport {
                error: format!("{err:#}"),
                problems: Vec::new(),
            },
        };
        eprintln!("{}", serde_json::to_string_pretty(&report).expect("error serializes"));
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fixtures(args) => cmd_fixtures(args),
        Command::Backtest(args) => cmd_backtest(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Sanitize(args) => cmd_sanitize(args),
        Command::Report(args) => cmd_report(args),
    }
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfigFile {
    strategy: StrategyParams,
    costs: CostConfig,
    initial_capital: f64,
    smoothing: SmoothingConfig,
    forecaster: ForecasterKind,
    lstm: ForecasterConfig,
    /// Forecaster models train on bars dated <= train_end (default: the last
    /// calendar day, i.e. an in-sample demo fit).
    train_end: Option<NaiveDate>,
    /// Calendar clip, inclusive. Defaults to the full shared date range.
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
    /// Path to a lexicon JSON; the built-in lexicon applies when omitted.
    lexicon: Option<PathBuf>,
    /// Tradable universe; when omitted, the built-in ten-ticker universe is
    /// used, filtered to the tickers that have a CSV in the prices directory.
    portfolio: Option<Vec<PortfolioEntry>>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        Self {
            strategy: StrategyParams::default(),
            costs: CostConfig::default(),
            initial_capital: 1_000_000.0,
            smoothing: SmoothingConfig::default(),
            forecaster: ForecasterKind::default(),
            lstm: ForecasterConfig::default(),
            train_end: None,
            start: None,
            end: None,
            lexicon: None,
            portfolio: None,
        }
    }
}

fn validate_config(config: &RunConfigFile) -> Vec<String> {
    let mut problems = Vec::new();
    if let Err(engine::EngineError::InvalidParams(ps)) = config.strategy.validate() {
        problems.extend(ps);
    }
    if !(config.initial_capital.is_finite() && config.initial_capital > 0.0) {
        problems.push(format!(
            "initial_capital must be positive and finite (got {})",
            config.initial_capital
        ));
    }
    if config.smoothing.window == 0 {
        problems.push("smoothing.window must be >= 1".to_string());
    }
    if let Err(e) = config.lstm.validate() {
        problems.push(format!("lstm: {e}"));
    }
    if let (Some(s), Some(e)) = (config.start, config.end) {
        if s > e {
            problems.push(format!("start {s} is after end {e}"));
        }
    }
    if !(config.costs.commission_per_share.is_finite() && config.costs.commission_per_share >= 0.0)
    {
        problems.push(format!(
            "costs.commission_per_share must be >= 0 (got {})",
            config.costs.commission_per_share
        ));
    }
    if !(config.costs.slippage_frac.is_finite()
        && (0.0..1.0).contains(&config.costs.slippage_frac))
    {
        problems.push(format!(
            "costs.slippage_frac must be in [0, 1) (got {})",
            config.costs.slippage_frac
        ));
    }
    if let Some(entries) = &config.portfolio {
        if entries.is_empty() {
            problems.push("portfolio must not be empty when given".to_string());
        }
    }
    problems
}

// ---------------------------------------------------------------------------
// Shared loading

struct LoadedInputs {
    config: RunConfigFile,
    config_bytes: Option<Vec<u8>>,
    portfolio: Portfolio,
    series: BTreeMap<String, BarSeries>,
    calendar: Calendar,
    store: HeadlineStore,
    lexicon: Lexicon,
    forecaster: Box<dyn PriceForecaster>,
    input_paths: Vec<PathBuf>,
}

impl LoadedInputs {
    fn settings(&self, sanitize: bool) -> RunSettings {
        RunSettings {
            params: self.config.strategy.clone(),
            costs: self.config.costs,
            initial_capital: self.config.initial_capital,
            smoothing: self.config.smoothing,
            sanitize,
        }
    }
}

fn load_inputs(args: &InputArgs) -> Result<LoadedInputs, CliError> {
    let (mut config, config_bytes) = match &args.config {
        Some(path) => {
            let bytes = fs::read(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(CliError::Other)?;
            let config: RunConfigFile = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing config {}", path.display()))
                .map_err(CliError::Other)?;
            (config, Some(bytes))
        }
        None => (RunConfigFile::default(), None),
    };
    if let Some(f) = args.forecaster {
        config.forecaster = match f {
            ForecasterArg::Lstm => ForecasterKind::Lstm,
            ForecasterArg::Persistence => ForecasterKind::Persistence,
        };
    }
    if let Some(seed) = args.seed {
        config.lstm.seed = seed;
    }
    let problems = validate_config(&config);
    if !problems.is_empty() {
        return Err(CliError::Invalid(problems));
    }

    let portfolio = match &config.portfolio {
        Some(entries) => Portfolio::new(entries.clone())
            .map_err(|e| CliError::Other(anyhow!("portfolio in config: {e}")))?,
        None => {
            let available: Vec<PortfolioEntry> = Portfolio::default_universe()
                .entries()
                .iter()
                .filter(|e| args.prices.join(format!("{}.csv", e.ticker)).is_file())
                .cloned()
                .collect();
            if available.is_empty() {
                return Err(CliError::Other(anyhow!(
                    "no <TICKER>.csv files for the built-in universe found in {}",
                    args.prices.display()
                )));
            }
            Portfolio::new(available).expect("filtered universe is valid")
        }
    };

    let mut series = BTreeMap::new();
    let mut input_paths = vec![args.headlines.clone()];
    for ticker in portfolio.tickers() {
        let path = args.prices.join(format!("{ticker}.csv"));
        let s = load_ohlcv(&path, ticker)
            .map_err(|e| CliError::Other(anyhow!("loading {}: {e}", path.display())))?;
        input_paths.push(path);
        series.insert(ticker.to_string(), s);
    }
    let all: Vec<BarSeries> = series.values().cloned().collect();
    let start = config
        .start
        .unwrap_or_else(|| all.iter().map(|s| s.first_date()).min().expect("nonempty"));
    let end = config
        .end
        .unwrap_or_else(|| all.iter().map(|s| s.last_date()).max().expect("nonempty"));
    let calendar = Calendar::build(&all, start, end)
        .map_err(|e| CliError::Other(anyhow!("building calendar: {e}")))?;

    let store = HeadlineStore::load_jsonl(&args.headlines)
        .map_err(|e| CliError::Other(anyhow!("loading headlines: {e}")))?;
    let lexicon = match &config.lexicon {
        Some(path) => {
            input_paths.push(path.clone());
            Lexicon::load(path).map_err(|e| CliError::Other(anyhow!("loading lexicon: {e}")))?
        }
        None => Lexicon::default_lexicon().clone(),
    };

    let forecaster: Box<dyn PriceForecaster> = match config.forecaster {
        ForecasterKind::Persistence => Box::new(PersistenceForecaster),
        ForecasterKind::Lstm => {
            let train_end = config.train_end.unwrap_or_else(|| {
                *calendar.dates().last().expect("calendar is non-empty")
            });
            let trained = LstmForecaster::train_all(&all, train_end, &config.lstm)
                .map_err(|e| CliError::Other(anyhow!("training forecaster: {e}")))?;
            Box::new(trained)
        }
    };

    Ok(LoadedInputs {
        config,
        config_bytes,
        portfolio,
        series,
        calendar,
        store,
        lexicon,
        forecaster,
        input_paths,
    })
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_sha256: Option<String>,
    /// Input path -> SHA-256 of its bytes.
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn write_manifest(
    out: &Path,
    command: &str,
    config_bytes: Option<&[u8]>,
    input_paths: &[PathBuf],
    outputs: &[&str],
) -> anyhow::Result<()> {
    let mut inputs = BTreeMap::new();
    for p in input_paths {
        let bytes = fs::read(p).with_context(|| format!("hashing input {}", p.display()))?;
        inputs.insert(p.display().to_string(), sha256_hex(&bytes));
    }
    let manifest = Manifest {
        tool: "ats",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config_sha256: config_bytes.map(sha256_hex),
        inputs,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

fn ensure_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

// ---------------------------------------------------------------------------
// fixtures

fn cmd_fixtures(args: FixturesArgs) -> Result<(), CliError> {
    let bundle = fixtures::economic_bundle();
    let out = &args.out;
    ensure_out(out)?;
    let prices_dir = out.join("prices");
    ensure_out(&prices_dir)?;
    for (ticker, series) in &bundle.series {
        let mut csv = String::from("date,open,high,low,close,volume\n");
        for b in series.bars() {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.date, b.open, b.high, b.low, b.close, b.volume
            ));
        }
        fs::write(prices_dir.join(format!("{ticker}.csv")), csv).map_err(anyhow::Error::from)?;
    }
    bundle
        .store
        .write_jsonl(&out.join("headlines.jsonl"))
        .map_err(|e| CliError::Other(anyhow!("writing headlines: {e}")))?;
    fixtures::attack_corpus_store()
        .write_jsonl(&out.join("corpus.jsonl"))
        .map_err(|e| CliError::Other(anyhow!("writing corpus: {e}")))?;
    let config = RunConfigFile {
        portfolio: Some(bundle.portfolio.entries().to_vec()),
        forecaster: ForecasterKind::Persistence,
        lstm: ForecasterConfig { window: 20, ..ForecasterConfig::default() },
        ..RunConfigFile::default()
    };
    fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&config).expect("config serializes"),
    )
    .map_err(anyhow::Error::from)?;
    write_manifest(
        out,
        "fixtures",
        None,
        &[],
        &["prices/", "headlines.jsonl", "corpus.jsonl", "config.json"],
    )?;
    println!(
        "wrote demo fixtures to {}: {} assets x {} trading days, {} headlines (showcase target: {} {})",
        out.display(),
        bundle.series.len(),
        bundle.calendar.len(),
        bundle.store.len(),
        bundle.showcase_ticker,
        bundle.showcase_date
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// backtest

/// News signals via the remote backends, mirroring the local composition.
fn remote_news(
    store: &HeadlineStore,
    portfolio: &Portfolio,
    calendar: &Calendar,
    lexicon: &Lexicon,
    smoothing: &SmoothingConfig,
    assoc_remote: bool,
    sent_remote: bool,
    endpoint: &EndpointConfig,
) -> anyhow::Result<(NewsComputation, Vec<String>)> {
    const BATCH: usize = 50;
    let mut warnings = Vec::new();
    let mut client = RemoteClient::new(endpoint.clone())
        .map_err(|e| anyhow!("building remote client: {e}"))?;

    // Association.
    let mut associations: Vec<Association> = Vec::with_capacity(store.len());
    if assoc_remote {
        let headlines: Vec<&ats_core::news::Headline> = store.headlines().iter().collect();
        for chunk in headlines.chunks(BATCH) {
            let (mut batch, failures) = client
                .associate(chunk, portfolio)
                .map_err(|e| anyhow!("remote association: {e}"))?;
            for f in failures {
                warnings.push(format!(
                    "remote association line unusable ({}): {:?}",
                    f.reason, f.raw_line
                ));
            }
            associations.append(&mut batch);
        }
    } else {
        for h in store.headlines() {
            associations.push(
                associate_rule(h, portfolio).map_err(|e| anyhow!("associating {}: {e}", h.id))?,
            );
        }
    }
    let assoc_by_id: BTreeMap<&str, &Association> = associations
        .iter()
        .map(|a| (a.headline_id.as_str(), a))
        .collect();

    // Scoring.
    let mut scored: Vec<ScoredHeadline> = Vec::new();
    let mut routing_failures = 0usize;
    let mut by_ticker: BTreeMap<&str, Vec<&ats_core::news::Headline>> = BTreeMap::new();
    for h in store.headlines() {
        match assoc_by_id.get(h.id.as_str()).and_then(|a| a.ticker()) {
            Some(ticker) => by_ticker.entry(ticker).or_default().push(h),
            None => routing_failures += 1,
        }
    }
    for (ticker, headlines) in &by_ticker {
        if sent_remote {
            for chunk in headlines.chunks(BATCH) {
                let (batch, failures) = client
                    .score(chunk, ticker)
                    .map_err(|e| anyhow!("remote sentiment for {ticker}: {e}"))?;
                for f in failures {
                    warnings.push(format!(
                        "remote sentiment line unusable ({}): {:?}",
                        f.reason, f.raw_line
                    ));
                }
                for s in batch {
                    let h = store.get(&s.headline_id).expect("score maps to stored id");
                    scored.push(ScoredHeadline {
                        headline_id: s.headline_id.clone(),
                        ticker: ticker.to_string(),
                        date: h.date,
                        polarity: s.polarity,
                        confidence: s.confidence,
                    });
                }
            }
        } else {
            for h in headlines {
                let s = score_sentiment_lexicon(&h.id, &h.raw_html, lexicon);
                scored.push(ScoredHeadline {
                    headline_id: h.id.clone(),
                    ticker: ticker.to_string(),
                    date: h.date,
                    polarity: s.polarity,
                    confidence: s.confidence,
                });
            }
        }
    }
    scored.sort_by(|a, b| a.headline_id.cmp(&b.headline_id));
    let daily = aggregate_daily(&scored).map_err(|e| anyhow!("daily aggregation: {e}"))?;
    let mut smoothed = BTreeMap::new();
    for entry in portfolio.entries() {
        for &date in calendar.dates() {
            let value = smoothed_sentiment(&entry.ticker, date, &daily, smoothing);
            smoothed.insert((entry.ticker.clone(), date), value);
        }
    }
    Ok((
        NewsComputation { associations, scored, daily, smoothed, routing_failures },
        warnings,
    ))
}

fn cmd_backtest(args: BacktestArgs) -> Result<(), CliError> {
    let loaded = load_inputs(&args.input)?;
    ensure_out(&args.out)?;
    let settings = loaded.settings(args.sanitize);

    let deltas = compute_price_deltas(
        loaded.forecaster.as_ref(),
        &loaded.series,
        &loaded.portfolio,
        &loaded.calendar,
    )
    .map_err(|e| CliError::Other(anyhow!("price signals: {e}")))?;

    let table = HomoglyphTable::default_confusables();
    let (store_used, reports) = if args.sanitize {
        let (s, r) = sanitize_store(&loaded.store, &table)
            .map_err(|e| CliError::Other(anyhow!("sanitizing store: {e}")))?;
        (s, r)
    } else {
        (loaded.store.clone(), Vec::new())
    };

    let use_remote = args.assoc == AssocArg::Remote || args.sentiment == SentimentArg::Remote;
    let (news, mut warnings) = if use_remote {
        let endpoint = EndpointConfig {
            base_url: args.remote_url.clone(),
            model: args.remote_model.clone(),
            auth_env: args.auth_env.clone(),
            ..EndpointConfig::default()
        };
        remote_news(
            &store_used,
            &loaded.portfolio,
            &loaded.calendar,
            &loaded.lexicon,
            &settings.smoothing,
            args.assoc == AssocArg::Remote,
            args.sentiment == SentimentArg::Remote,
            &endpoint,
        )
        .map_err(CliError::Other)?
    } else {
        let news = compute_news_signals(
            &store_used,
            &loaded.portfolio,
            &loaded.calendar,
            &loaded.lexicon,
            &settings.smoothing,
        )
        .map_err(|e| CliError::Other(anyhow!("news signals: {e}")))?;
        (news, Vec::new())
    };

    let grid = build_signal_grid(&deltas.deltas, &news.smoothed, &loaded.portfolio, &loaded.calendar);
    let backtest = engine::run_backtest(
        &loaded.calendar,
        &loaded.series,
        &loaded.portfolio,
        &grid,
        &settings.params,
        &settings.costs,
        settings.initial_capital,
    )
    .map_err(|e| CliError::Other(anyhow!("backtest: {e}")))?;

    warnings.extend(deltas.warnings.iter().cloned());
    warnings.extend(backtest.warnings.iter().cloned());

    fs::write(args.out.join("equity.csv"), backtest.equity_csv()).map_err(anyhow::Error::from)?;
    fs::write(args.out.join("trades.csv"), backtest.trades_csv()).map_err(anyhow::Error::from)?;
    fs::write(args.out.join("actions.csv"), backtest.actions_csv())
        .map_err(anyhow::Error::from)?;
    let summary = serde_json::json!({
        "initial_capital": backtest.initial_capital,
        "final_equity": backtest.final_equity,
        "cumulative_return_pct": backtest.cumulative_return_pct,
        "n_trades": backtest.fills.len(),
        "n_days": loaded.calendar.len(),
        "n_headlines": store_used.len(),
        "routing_failures": news.routing_failures,
        "sanitize": args.sanitize,
        "assoc_backend": if args.assoc == AssocArg::Remote { "remote" } else { "rule" },
        "sentiment_backend": if args.sentiment == SentimentArg::Remote { "remote" } else { "lexicon" },
        "forecaster": loaded.config.forecaster,
        "warnings": warnings,
    });
    fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(anyhow::Error::from)?;
    let mut outputs = vec!["equity.csv", "trades.csv", "actions.csv", "summary.json"];
    if args.sanitize {
        fs::write(
            args.out.join("detection_reports.json"),
            serde_json::to_string_pretty(&reports).expect("reports serialize"),
        )
        .map_err(anyhow::Error::from)?;
        outputs.push("detection_reports.json");
    }
    write_manifest(
        &args.out,
        "backtest",
        loaded.config_bytes.as_deref(),
        &loaded.input_paths,
        &outputs,
    )?;
    println!(
        "backtest: {} days, {} trades, CR {:+.4}% (final equity {:.2})",
        loaded.calendar.len(),
        backtest.fills.len(),
        backtest.cumulative_return_pct,
        backtest.final_equity
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// attack

fn cmd_attack(args: AttackArgs) -> Result<(), CliError> {
    let loaded = load_inputs(&args.input)?;
    ensure_out(&args.out)?;
    let settings = loaded.settings(args.sanitize);
    let table = HomoglyphTable::default_confusables();
    let hidden = match &args.payload {
        Some(p) => HiddenTextConfig { payload: p.clone(), ..HiddenTextConfig::default() },
        None => HiddenTextConfig::default(),
    };
    let spec = AttackSpec {
        kind: args.kind.into(),
        ticker: args.ticker.clone(),
        date: args.date,
    };
    let inputs = SweepInputs {
        calendar: &loaded.calendar,
        series: &loaded.series,
        portfolio: &loaded.portfolio,
        store: &loaded.store,
        lexicon: &loaded.lexicon,
        table: &table,
    };
    let outcome =
        evaluator::paired_run(&spec, &inputs, loaded.forecaster.as_ref(), &settings, &hidden)
            .map_err(|e| CliError::Other(anyhow!("paired run: {e}")))?;

    fs::write(
        args.out.join("record.json"),
        serde_json::to_string_pretty(&outcome.record).expect("record serializes"),
    )
    .map_err(anyhow::Error::from)?;
    fs::write(args.out.join("clean_trades.csv"), outcome.clean.backtest.trades_csv())
        .map_err(anyhow::Error::from)?;
    fs::write(
        args.out.join("attacked_trades.csv"),
        outcome.attacked.backtest.trades_csv(),
    )
    .map_err(anyhow::Error::from)?;
    fs::write(args.out.join("clean_actions.csv"), outcome.clean.backtest.actions_csv())
        .map_err(anyhow::Error::from)?;
    fs::write(
        args.out.join("attacked_actions.csv"),
        outcome.attacked.backtest.actions_csv(),
    )
    .map_err(anyhow::Error::from)?;
    fs::write(
        args.out.join("equity_pair.csv"),
        equity_pair_csv(
            &outcome.clean.backtest.equity_curve,
            &outcome.attacked.backtest.equity_curve,
        ),
    )
    .map_err(anyhow::Error::from)?;
    fs::write(
        args.out.join("touched.json"),
        serde_json::to_string_pretty(&outcome.touched).expect("touched serializes"),
    )
    .map_err(anyhow::Error::from)?;
    write_manifest(
        &args.out,
        "attack",
        loaded.config_bytes.as_deref(),
        &loaded.input_paths,
        &[
            "record.json",
            "clean_trades.csv",
            "attacked_trades.csv",
            "clean_actions.csv",
            "attacked_actions.csv",
            "equity_pair.csv",
            "touched.json",
        ],
    )?;
    let r = &outcome.record;
    println!(
        "{} on {} {}: action {} -> {}, delta CR {:+.4}pp, dollar impact {:+.2}",
        r.kind.as_str(),
        r.ticker,
        r.date,
        r.action_clean.as_str(),
        r.action_attacked.as_str(),
        r.delta_cr_pp,
        r.dollar_impact
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let loaded = load_inputs(&args.input)?;
    ensure_out(&args.out)?;
    let settings = loaded.settings(args.sanitize);
    let table = HomoglyphTable::default_confusables();
    let kinds: Vec<AttackKind> = if args.kinds.is_empty() {
        vec![AttackKind::Homoglyph, AttackKind::HiddenText, AttackKind::Identity]
    } else {
        args.kinds.iter().map(|&k| k.into()).collect()
    };
    let execution = if args.sequential {
        Execution::Sequential
    } else if let Some(n) = args.jobs {
        Execution::Parallel { threads: Some(n) }
    } else {
        Execution::default()
    };
    let config = SweepConfig {
        kinds,
        settings,
        hidden: HiddenTextConfig::default(),
        execution,
    };
    let inputs = SweepInputs {
        calendar: &loaded.calendar,
        series: &loaded.series,
        portfolio: &loaded.portfolio,
        store: &loaded.store,
        lexicon: &loaded.lexicon,
        table: &table,
    };
    let report = evaluator::sweep(&inputs, loaded.forecaster.as_ref(), &config)
        .map_err(|e| CliError::Other(anyhow!("sweep: {e}")))?;

    fs::write(args.out.join("report.json"), report.to_json()).map_err(anyhow::Error::from)?;
    fs::write(args.out.join("records.csv"), report.records_csv())
        .map_err(anyhow::Error::from)?;
    let rendered = report.render_table();
    fs::write(args.out.join("table.txt"), &rendered).map_err(anyhow::Error::from)?;
    write_manifest(
        &args.out,
        "sweep",
        loaded.config_bytes.as_deref(),
        &loaded.input_paths,
        &["report.json", "records.csv", "table.txt"],
    )?;
    print!("{rendered}");
    Ok(())
}

// ---------------------------------------------------------------------------
// sanitize

fn cmd_sanitize(args: SanitizeArgs) -> Result<(), CliError> {
    ensure_out(&args.out)?;
    let store = HeadlineStore::load_jsonl(&args.headlines)
        .map_err(|e| CliError::Other(anyhow!("loading headlines: {e}")))?;
    let table = HomoglyphTable::default_confusables();
    let (clean, reports) = sanitize_store(&store, &table)
        .map_err(|e| CliError::Other(anyhow!("sanitizing: {e}")))?;
    clean
        .write_jsonl(&args.out.join("sanitized.jsonl"))
        .map_err(|e| CliError::Other(anyhow!("writing sanitized store: {e}")))?;
    fs::write(
        args.out.join("detection_reports.json"),
        serde_json::to_string_pretty(&reports).expect("reports serialize"),
    )
    .map_err(anyhow::Error::from)?;
    write_manifest(
        &args.out,
        "sanitize",
        None,
        &[args.headlines.clone()],
        &["sanitized.jsonl", "detection_reports.json"],
    )?;
    let suspicious = reports.iter().filter(|r| r.suspicious).count();
    let hidden: usize = reports.iter().map(|r| r.hidden_elements_removed).sum();
    let glyphs: usize = reports.iter().map(|r| r.homoglyphs_normalized).sum();
    println!(
        "sanitized {} headlines: {} suspicious ({} hidden elements removed, {} confusable characters normalized)",
        reports.len(),
        suspicious,
        hidden,
        glyphs
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    ensure_out(&args.out)?;
    let bytes = fs::read(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))
        .map_err(CliError::Other)?;
    let report: SweepReport = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {}", args.report.display()))
        .map_err(CliError::Other)?;
    let rendered = report.render_table();
    fs::write(args.out.join("table.txt"), &rendered).map_err(anyhow::Error::from)?;
    fs::write(args.out.join("records.csv"), report.records_csv())
        .map_err(anyhow::Error::from)?;
    write_manifest(
        &args.out,
        "report",
        None,
        &[args.report.clone()],
        &["table.txt", "records.csv"],
    )?;
    print!("{rendered}");
    Ok(())
}
