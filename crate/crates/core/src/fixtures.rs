//! Deterministic fixtures shared by the test suites, the benchmark, and the
//! CLI demo commands.
//!
//! Two artifacts live here:
//!
//! * [`attack_corpus`] — 210 labeled single-entity headlines (21 templates x
//!   10 tickers) for transform fidelity, routing, invisibility, and polarity
//!   checks. Every headline embeds exactly one portfolio alias as a clean
//!   token; positive templates carry at most two positive lexicon terms
//!   (summed weight <= 1.7), so a hidden "losses and layoffs" payload
//!   (weight -1.8) always drags the polarity below zero.
//! * [`economic_bundle`] — a three-asset, 60-trading-day market with seeded
//!   price paths and a small news schedule. NVDA trends up after the
//!   showcase day, so going long on its two positive headlines makes money
//!   and the attacked counterfactual (short or flat) loses it: the bundle
//!   demonstrates a monetary attack impact without any external data.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::market_data::{Bar, BarSeries, Calendar, Portfolio, PortfolioEntry};
use crate::news::{Headline, HeadlineStore};
use crate::pipeline::RunSettings;

/// A corpus headline with its ground-truth labels.
#[derive(Debug, Clone)]
pub struct LabeledHeadline {
    pub headline: Headline,
    /// The ticker whose alias is embedded in the text.
    pub ticker: String,
    /// The alias string actually used (e.g. "Nvidia" rather than "NVDA").
    pub alias: String,
    /// Expected lexicon polarity sign: +1, -1, or 0.
    pub expected_sign: i8,
}

/// Headline templates; `{}` is the entity slot. The sign is the lexicon
/// verdict by construction — template words were chosen against the default
/// lexicon so only the intended terms match.
const TEMPLATES: &[(&str, i8)] = &[
    // positive: one or two positive terms, summed weight <= 1.7
    ("{} shares surge after upbeat quarterly report", 1),
    ("{} beats expectations for the third quarter", 1),
    ("{} stock rallies as demand stays strong", 1),
    ("Analysts see strong growth ahead for {}", 1),
    ("{} wins key contract, shares jump", 1),
    ("{} profit tops estimates", 1),
    ("{} soars on breakthrough announcement", 1),
    ("Upgrade lifts {} to a record close", 1),
    ("{} gains after regulators grant approval", 1),
    ("{} climbs as investors turn bullish", 1),
    // negative
    ("{} shares drop on disappointing outlook", -1),
    ("{} falls as margin fears grow", -1),
    ("Lawsuit weighs on {}, stock declines", -1),
    ("{} plunges after earnings miss", -1),
    ("{} announces layoffs amid weak demand", -1),
    // neutral: no lexicon hits at all
    ("{} to hold annual meeting next month", 0),
    ("{} names new chief financial officer", 0),
    ("{} schedules earnings call for Thursday", 0),
    ("What the latest filings reveal about {}", 0),
    ("{} updates its corporate travel policy", 0),
    ("Board of {} approves routine dividend", 0),
];

/// The first `n` weekdays starting at `start` (inclusive if a weekday).
pub fn weekdays_from(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date range stays in bounds");
    }
    out
}

/// 210 labeled headlines: each of the 10 universe tickers crossed with every
/// template, alias choice cycling through the ticker's alias list so symbol
/// and company-name forms both appear.
pub fn attack_corpus() -> Vec<LabeledHeadline> {
    let portfolio = Portfolio::default_universe();
    let dates = weekdays_from(NaiveDate::from_ymd_opt(2024, 2, 1).expect("valid"), 40);
    let mut out = Vec::new();
    let mut serial = 0usize;
    for entry in portfolio.entries() {
        for (ti, (template, sign)) in TEMPLATES.iter().enumerate() {
            let alias = &entry.aliases[ti % entry.aliases.len()];
            serial += 1;
            out.push(LabeledHeadline {
                headline: Headline {
                    id: format!("c{serial:04}"),
                    date: dates[serial % dates.len()],
                    raw_html: template.replacen("{}", alias, 1),
                    source: "fixture-corpus".to_string(),
                },
                ticker: entry.ticker.clone(),
                alias: alias.clone(),
                expected_sign: *sign,
            });
        }
    }
    out
}

/// The corpus as a plain headline store.
pub fn attack_corpus_store() -> HeadlineStore {
    HeadlineStore::new(attack_corpus().into_iter().map(|l| l.headline).collect())
        .expect("corpus ids are unique")
}

// ---------------------------------------------------------------------------
// Economic bundle

/// A self-contained market + news fixture with a showcase attack target.
#[derive(Debug, Clone)]
pub struct EconomicBundle {
    pub portfolio: Portfolio,
    pub series: BTreeMap<String, BarSeries>,
    pub calendar: Calendar,
    pub store: HeadlineStore,
    pub settings: RunSettings,
    /// The demonstration target: two positive headlines on a day right
    /// before a sustained price rise.
    pub showcase_ticker: String,
    pub showcase_date: NaiveDate,
}

const BUNDLE_DAYS: usize = 60;
/// Trading-day index of the showcase target.
const SHOWCASE_DAY: usize = 30;

/// Synthesize one OHLCV path. `drift(i)` is the deterministic part of the
/// day-`i` return; seeded noise of up to ±0.3% rides on top. Bar invariants
/// (low <= open, close <= high, all positive) hold by construction.
fn synth_series(
    ticker: &str,
    start_price: f64,
    drift: impl Fn(usize) -> f64,
    dates: &[NaiveDate],
    rng: &mut ChaCha8Rng,
) -> BarSeries {
    let mut bars = Vec::with_capacity(dates.len());
    let mut prev_close = start_price;
    for (i, &date) in dates.iter().enumerate() {
        let close = if i == 0 {
            start_price
        } else {
            prev_close * (1.0 + drift(i) + rng.gen_range(-0.003..=0.003))
        };
        let open = prev_close * (1.0 + rng.gen_range(-0.002..=0.002));
        let high = open.max(close) * (1.0 + rng.gen_range(0.0..=0.004));
        let low = open.min(close) * (1.0 - rng.gen_range(0.0..=0.004));
        let volume = (1_000_000.0 * rng.gen_range(0.5_f64..=1.5)).round();
        bars.push(Bar { date, open, high, low, close, volume });
        prev_close = close;
    }
    BarSeries::new(ticker, bars).expect("synthesized bars are valid")
}

/// Build the bundle. Everything is seeded and pure: two calls return
/// identical data.
pub fn economic_bundle() -> EconomicBundle {
    let dates = weekdays_from(NaiveDate::from_ymd_opt(2024, 2, 1).expect("valid"), BUNDLE_DAYS);
    let mut rng = ChaCha8Rng::seed_from_u64(0x2024_0201);

    // NVDA: flat, then +0.4%/day after the showcase decision — the drift
    // dominates the ±0.3% noise, so the post-showcase rise is certain.
    let nvda = synth_series(
        "NVDA",
        700.0,
        |i| if i > SHOWCASE_DAY { 0.004 } else { 0.0 },
        &dates,
        &mut rng,
    );
    // TSLA: mild steady decline.
    let tsla = synth_series("TSLA", 190.0, |_| -0.0005, &dates, &mut rng);
    // XOM: flat.
    let xom = synth_series("XOM", 105.0, |_| 0.0, &dates, &mut rng);

    let calendar = Calendar::build(
        &[nvda.clone(), tsla.clone(), xom.clone()],
        dates[0],
        dates[BUNDLE_DAYS - 1],
    )
    .expect("bundle calendar is non-empty");
    let mut series = BTreeMap::new();
    for s in [nvda, tsla, xom] {
        series.insert(s.ticker.clone(), s);
    }

    let portfolio = Portfolio::new(vec![
        PortfolioEntry { ticker: "NVDA".into(), aliases: vec!["NVDA".into(), "Nvidia".into()] },
        PortfolioEntry { ticker: "TSLA".into(), aliases: vec!["TSLA".into(), "Tesla".into()] },
        PortfolioEntry {
            ticker: "XOM".into(),
            aliases: vec!["XOM".into(), "Exxon Mobil".into()],
        },
    ])
    .expect("bundle portfolio is valid");

    // News schedule, by trading-day index. The showcase day carries two
    // positive NVDA headlines; the nearest other NVDA news is 20 trading
    // days earlier, far outside the 7-calendar-day smoothing window.
    let mk = |id: &str, day: usize, text: &str| Headline {
        id: id.to_string(),
        date: dates[day],
        raw_html: text.to_string(),
        source: "fixture-bundle".to_string(),
    };
    let store = HeadlineStore::new(vec![
        mk("b-tsla-0", 8, "Tesla wins key contract, shares jump"),
        mk("b-nvda-0", 10, "Nvidia schedules earnings call for Thursday"),
        mk("b-xom-0", 15, "Exxon Mobil profit tops estimates"),
        mk("b-none-0", 20, "Markets quiet ahead of the holiday weekend"),
        mk("b-nvda-1", SHOWCASE_DAY, "Nvidia soars on breakthrough announcement"),
        mk("b-nvda-2", SHOWCASE_DAY, "Nvidia beats expectations for the third quarter"),
        mk("b-tsla-1", 40, "Tesla announces layoffs amid weak demand"),
        mk("b-xom-1", 45, "Exxon Mobil names new chief financial officer"),
    ])
    .expect("bundle ids are unique");

    EconomicBundle {
        portfolio,
        series,
        calendar,
        store,
        settings: RunSettings::default(),
        showcase_ticker: "NVDA".to_string(),
        showcase_date: dates[SHOWCASE_DAY],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::news::{score_sentiment_lexicon, Lexicon};

    #[test]
    fn corpus_has_at_least_200_labeled_headlines() {
        let corpus = attack_corpus();
        assert!(corpus.len() >= 200, "got {}", corpus.len());
        // Unique ids (store construction would fail otherwise).
        let store = attack_corpus_store();
        assert_eq!(store.len(), corpus.len());
        // All ten tickers are covered evenly.
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in &corpus {
            *counts.entry(l.ticker.as_str()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&n| n == TEMPLATES.len()));
    }

    #[test]
    fn corpus_polarities_match_their_labels() {
        let lexicon = Lexicon::default_lexicon();
        for l in attack_corpus() {
            let score = score_sentiment_lexicon(&l.headline.id, &l.headline.raw_html, lexicon);
            match l.expected_sign {
                1 => assert!(
                    score.polarity > 0.0,
                    "{}: {} scored {}",
                    l.headline.id,
                    l.headline.raw_html,
                    score.polarity
                ),
                -1 => assert!(
                    score.polarity < 0.0,
                    "{}: {} scored {}",
                    l.headline.id,
                    l.headline.raw_html,
                    score.polarity
                ),
                _ => assert_eq!(
                    score.polarity, 0.0,
                    "{}: {} scored {}",
                    l.headline.id, l.headline.raw_html, score.polarity
                ),
            }
        }
    }

    #[test]
    fn corpus_embeds_exactly_one_alias_occurrence() {
        let portfolio = Portfolio::default_universe();
        for l in attack_corpus() {
            // The labeled alias occurs...
            assert!(
                l.headline.raw_html.contains(&l.alias),
                "{} missing alias {}",
                l.headline.id,
                l.alias
            );
            // ...and no alias of any *other* ticker does.
            for entry in portfolio.entries() {
                if entry.ticker == l.ticker {
                    continue;
                }
                for alias in &entry.aliases {
                    assert!(
                        !l.headline.raw_html.to_lowercase().contains(&alias.to_lowercase()),
                        "{} contains cross alias {}",
                        l.headline.id,
                        alias
                    );
                }
            }
        }
    }

    #[test]
    fn bundle_is_deterministic() {
        let a = economic_bundle();
        let b = economic_bundle();
        assert_eq!(a.series["NVDA"].bars(), b.series["NVDA"].bars());
        assert_eq!(a.showcase_date, b.showcase_date);
        assert_eq!(a.store.len(), b.store.len());
    }

    #[test]
    fn bundle_shape_and_showcase_layout() {
        let bundle = economic_bundle();
        assert_eq!(bundle.calendar.len(), BUNDLE_DAYS);
        assert_eq!(bundle.series.len(), 3);
        // Two NVDA headlines on the showcase day.
        let on_day: Vec<_> = bundle
            .store
            .headlines()
            .iter()
            .filter(|h| h.date == bundle.showcase_date)
            .collect();
        assert_eq!(on_day.len(), 2);
        assert!(on_day.iter().all(|h| h.raw_html.contains("Nvidia")));
        // No other NVDA news within the 7-calendar-day trailing window.
        for h in bundle.store.headlines() {
            if h.raw_html.contains("Nvidia") && h.date != bundle.showcase_date {
                let gap = (bundle.showcase_date - h.date).num_days();
                assert!(
                    !(0..=6).contains(&gap),
                    "{} pollutes the showcase smoothing window",
                    h.id
                );
            }
        }
    }

    #[test]
    fn bundle_nvda_rises_after_showcase() {
        let bundle = economic_bundle();
        let bars = bundle.series["NVDA"].bars();
        let at_showcase = bars[SHOWCASE_DAY].close;
        let final_close = bars[BUNDLE_DAYS - 1].close;
        assert!(
            final_close > at_showcase * 1.02,
            "drift must dominate noise: {at_showcase} -> {final_close}"
        );
        // Before the showcase the path is flat-ish: no 10% excursions.
        let start = bars[0].close;
        assert!((at_showcase / start - 1.0).abs() < 0.10);
    }

    #[test]
    fn bundle_bars_satisfy_ohlc_invariants() {
        // BarSeries::new validates, but assert explicitly on a sample so a
        // future synthesis change cannot silently weaken the fixture.
        let bundle = economic_bundle();
        for s in bundle.series.values() {
            for b in s.bars() {
                assert!(b.low <= b.open && b.open <= b.high);
                assert!(b.low <= b.close && b.close <= b.high);
                assert!(b.low > 0.0 && b.volume >= 0.0);
            }
        }
    }
}
