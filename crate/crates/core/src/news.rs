//! News ingestion and the sentiment signal: headline store, entity
//! association, per-headline sentiment, daily aggregation and smoothing.
//!
//! Headlines arrive as JSONL records of `{id, date, raw_html, source}` and
//! are immutable after ingest. Association routes each headline to at most
//! one ticker by codepoint-exact alias matching over the *visible* text —
//! which is exactly the surface the homoglyph attack breaks. Sentiment is
//! scored by a versioned term-weight lexicon (or a remote model, see
//! [`crate::remote`]); the lexicon deliberately scores whatever text it is
//! handed so an experiment arm can feed it raw or sanitized input.
//!
//! Per (ticker, day), scores reduce to a mean and then to a trailing
//! 7-calendar-day moving average; days with no news in the whole window
//! contribute a neutral 0.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::Portfolio;
use crate::sanitizer::{self, SanitizeError};

#[derive(Debug, Error)]
pub enum NewsError {
    #[error("{path}: I/O error: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: bad headline record: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("duplicate headline id {0}")]
    DuplicateId(String),
    #[error("headline {id}: {source}")]
    Sanitize { id: String, source: SanitizeError },
    #[error("daily mean over mixed groups: expected ({ticker}, {date}), found ({found_ticker}, {found_date})")]
    MixedGroup {
        ticker: String,
        date: NaiveDate,
        found_ticker: String,
        found_date: NaiveDate,
    },
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
}

// ---------------------------------------------------------------------------
// Headlines

/// One news headline as ingested. `raw_html` is the original fragment —
/// possibly plain text, possibly carrying markup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Headline {
    pub id: String,
    pub date: NaiveDate,
    pub raw_html: String,
    pub source: String,
}

/// Immutable, id-indexed collection of headlines.
#[derive(Debug, Clone, Default)]
pub struct HeadlineStore {
    headlines: Vec<Headline>,
    by_id: BTreeMap<String, usize>,
}

impl HeadlineStore {
    pub fn new(headlines: Vec<Headline>) -> Result<Self, NewsError> {
        let mut by_id = BTreeMap::new();
        for (i, h) in headlines.iter().enumerate() {
            if by_id.insert(h.id.clone(), i).is_some() {
                return Err(NewsError::DuplicateId(h.id.clone()));
            }
        }
        Ok(Self { headlines, by_id })
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, NewsError> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| NewsError::Io {
            path: display.clone(),
            source,
        })?;
        let mut headlines = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| NewsError::Io {
                path: display.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let h: Headline = serde_json::from_str(&line).map_err(|e| NewsError::Parse {
                path: display.clone(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            headlines.push(h);
        }
        Self::new(headlines)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), NewsError> {
        let display = path.display().to_string();
        let mut file = std::fs::File::create(path).map_err(|source| NewsError::Io {
            path: display.clone(),
            source,
        })?;
        for h in &self.headlines {
            let line = serde_json::to_string(h).expect("headline serializes");
            writeln!(file, "{line}").map_err(|source| NewsError::Io {
                path: display.clone(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn headlines(&self) -> &[Headline] {
        &self.headlines
    }

    pub fn get(&self, id: &str) -> Option<&Headline> {
        self.by_id.get(id).map(|&i| &self.headlines[i])
    }

    pub fn len(&self) -> usize {
        self.headlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headlines.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Association

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssociationResult {
    Ticker(String),
    Unrecognized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendTag {
    Rule,
    Lexicon,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub headline_id: String,
    pub result: AssociationResult,
    pub backend: BackendTag,
    /// True when aliases of more than one ticker matched; the longest alias
    /// (then portfolio order) decided the winner.
    pub ambiguous: bool,
}

impl Association {
    pub fn ticker(&self) -> Option<&str> {
        match &self.result {
            AssociationResult::Ticker(t) => Some(t),
            AssociationResult::Unrecognized => None,
        }
    }
}

/// Is the byte at `idx` (exclusive end allowed) a token boundary in `text`?
fn is_boundary(text: &str, idx: usize, before: bool) -> bool {
    if before {
        if idx == 0 {
            return true;
        }
        text[..idx]
            .chars()
            .next_back()
            .map(|c| !c.is_alphanumeric())
            .unwrap_or(true)
    } else {
        if idx >= text.len() {
            return true;
        }
        text[idx..]
            .chars()
            .next()
            .map(|c| !c.is_alphanumeric())
            .unwrap_or(true)
    }
}

/// Rule-based association: case-folded, codepoint-exact alias search over the
/// visible text, token boundaries required on both sides of a match.
///
/// Homoglyph-laced mentions do not match: Unicode case folding keeps Cyrillic
/// letters distinct from Latin ones, so an attacked token simply is not the
/// alias. No confusable normalization happens here — that is the sanitizer's
/// job, and it runs only when the defense is enabled.
pub fn associate_rule(headline: &Headline, portfolio: &Portfolio) -> Result<Association, NewsError> {
    let visible = sanitizer::extract_visible_text(&headline.raw_html).map_err(|source| {
        NewsError::Sanitize { id: headline.id.clone(), source }
    })?;
    let folded = visible.text.to_lowercase();

    // (alias char length, portfolio rank, ticker) for every alias that occurs
    // as a whole token.
    let mut matches: Vec<(usize, usize, &str)> = Vec::new();
    for (rank, entry) in portfolio.entries().iter().enumerate() {
        for alias in &entry.aliases {
            let needle = alias.to_lowercase();
            let mut from = 0usize;
            while let Some(pos) = folded[from..].find(&needle) {
                let start = from + pos;
                let end = start + needle.len();
                if is_boundary(&folded, start, true) && is_boundary(&folded, end, false) {
                    matches.push((alias.chars().count(), rank, entry.ticker.as_str()));
                    break; // one hit per alias is enough
                }
                from = end;
            }
        }
    }

    if matches.is_empty() {
        return Ok(Association {
            headline_id: headline.id.clone(),
            result: AssociationResult::Unrecognized,
            backend: BackendTag::Rule,
            ambiguous: false,
        });
    }
    let distinct: std::collections::BTreeSet<&str> = matches.iter().map(|m| m.2).collect();
    // Longest alias wins; portfolio order breaks length ties.
    matches.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(Association {
        headline_id: headline.id.clone(),
        result: AssociationResult::Ticker(matches[0].2.to_string()),
        backend: BackendTag::Rule,
        ambiguous: distinct.len() > 1,
    })
}

// ---------------------------------------------------------------------------
// Sentiment

/// Versioned term-weight lexicon. Terms may be multi-word phrases; matching
/// is case-insensitive on alphanumeric tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub version: String,
    terms: BTreeMap<String, f64>,
}

static DEFAULT_LEXICON: Lazy<Lexicon> = Lazy::new(|| {
    Lexicon::from_json(include_str!("../data/default_lexicon.json"))
        .expect("embedded lexicon is valid")
});

impl Lexicon {
    pub fn new(version: impl Into<String>, terms: BTreeMap<String, f64>) -> Result<Self, NewsError> {
        for (term, w) in &terms {
            if term.trim().is_empty() {
                return Err(NewsError::InvalidLexicon("empty term".into()));
            }
            if !w.is_finite() {
                return Err(NewsError::InvalidLexicon(format!(
                    "term {term:?} has non-finite weight"
                )));
            }
        }
        Ok(Self { version: version.into(), terms })
    }

    pub fn from_json(json: &str) -> Result<Self, NewsError> {
        let lex: Lexicon = serde_json::from_str(json)
            .map_err(|e| NewsError::InvalidLexicon(e.to_string()))?;
        Self::new(lex.version, lex.terms)
    }

    pub fn load(path: &Path) -> Result<Self, NewsError> {
        let json = std::fs::read_to_string(path).map_err(|source| NewsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json)
    }

    /// The built-in finance lexicon.
    pub fn default_lexicon() -> &'static Lexicon {
        &DEFAULT_LEXICON
    }

    pub fn terms(&self) -> &BTreeMap<String, f64> {
        &self.terms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub headline_id: String,
    /// Mean matched term weight, clamped to `[-1, 1]`.
    pub polarity: f64,
    /// Fraction of text tokens covered by matched terms, in `[0, 1]`.
    pub confidence: f64,
    pub backend: BackendTag,
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// Score a text against the lexicon:
/// `polarity = clamp(Σ matched weights / max(1, matched terms), -1, 1)`,
/// `confidence = matched tokens / total tokens`.
///
/// The function scores whatever string it is handed — raw fragment or
/// sanitized text — so the caller chooses the exposure per experiment arm.
/// Markup characters are token separators, which means concealed payload
/// words inside a raw fragment are scored like any others.
pub fn score_sentiment_lexicon(headline_id: &str, text: &str, lexicon: &Lexicon) -> SentimentScore {
    let tokens = tokenize(text);
    // Phrase list sorted longest-first so greedy matching prefers phrases.
    let mut phrases: Vec<(Vec<String>, f64)> = lexicon
        .terms
        .iter()
        .map(|(term, w)| (tokenize(term), *w))
        .filter(|(t, _)| !t.is_empty())
        .collect();
    phrases.sort_by_key(|(t, _)| std::cmp::Reverse(t.len()));

    let mut weight_sum = 0.0f64;
    let mut matched_terms = 0usize;
    let mut matched_tokens = 0usize;
    let mut i = 0usize;
    'outer: while i < tokens.len() {
        for (phrase, w) in &phrases {
            if tokens[i..].starts_with(phrase) {
                weight_sum += w;
                matched_terms += 1;
                matched_tokens += phrase.len();
                i += phrase.len();
                continue 'outer;
            }
        }
        i += 1;
    }

    let polarity = (weight_sum / matched_terms.max(1) as f64).clamp(-1.0, 1.0);
    let confidence = if tokens.is_empty() {
        0.0
    } else {
        matched_tokens as f64 / tokens.len() as f64
    };
    SentimentScore {
        headline_id: headline_id.to_string(),
        polarity,
        confidence,
        backend: BackendTag::Lexicon,
    }
}

// ---------------------------------------------------------------------------
// Daily aggregation and smoothing

/// One headline's score attributed to a (ticker, day) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHeadline {
    pub headline_id: String,
    pub ticker: String,
    pub date: NaiveDate,
    pub polarity: f64,
    pub confidence: f64,
}

/// Mean polarity of one (ticker, day) cell. `mean` is `None` on no-news days
/// — an undefined marker, deliberately distinct from a neutral 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySentiment {
    pub ticker: String,
    pub date: NaiveDate,
    pub count: usize,
    pub mean: Option<f64>,
}

/// Average the scores of one (ticker, day) cell. Mixed cells are an error.
pub fn daily_mean(
    ticker: &str,
    date: NaiveDate,
    scores: &[ScoredHeadline],
) -> Result<DailySentiment, NewsError> {
    let mut sum = 0.0f64;
    for s in scores {
        if s.ticker != ticker || s.date != date {
            return Err(NewsError::MixedGroup {
                ticker: ticker.to_string(),
                date,
                found_ticker: s.ticker.clone(),
                found_date: s.date,
            });
        }
        sum += s.polarity;
    }
    let count = scores.len();
    Ok(DailySentiment {
        ticker: ticker.to_string(),
        date,
        count,
        mean: if count == 0 { None } else { Some(sum / count as f64) },
    })
}

/// Group scored headlines into per-(ticker, day) cells.
pub fn aggregate_daily(
    scored: &[ScoredHeadline],
) -> Result<BTreeMap<(String, NaiveDate), DailySentiment>, NewsError> {
    let mut groups: BTreeMap<(String, NaiveDate), Vec<ScoredHeadline>> = BTreeMap::new();
    for s in scored {
        groups
            .entry((s.ticker.clone(), s.date))
            .or_default()
            .push(s.clone());
    }
    groups
        .into_iter()
        .map(|((ticker, date), scores)| {
            daily_mean(&ticker, date, &scores).map(|d| ((ticker, date), d))
        })
        .collect()
}

/// How the trailing average treats days whose daily mean is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedPolicy {
    /// Average only the defined entries in the window.
    #[default]
    Skip,
    /// Treat undefined entries as 0 and divide by the full window length.
    ZeroFill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Trailing window length in calendar days.
    pub window: usize,
    pub undefined: UndefinedPolicy,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { window: 7, undefined: UndefinedPolicy::Skip }
    }
}

/// Trailing moving average of daily sentiment for (ticker, date) over the
/// previous `window` calendar days (inclusive). Windows with no news at all
/// smooth to a neutral 0.
pub fn smoothed_sentiment(
    ticker: &str,
    date: NaiveDate,
    daily: &BTreeMap<(String, NaiveDate), DailySentiment>,
    config: &SmoothingConfig,
) -> f64 {
    let mut sum = 0.0f64;
    let mut defined = 0usize;
    for k in 0..config.window as u64 {
        let Some(day) = date.checked_sub_days(Days::new(k)) else {
            continue;
        };
        if let Some(cell) = daily.get(&(ticker.to_string(), day)) {
            if let Some(mean) = cell.mean {
                sum += mean;
                defined += 1;
            }
        }
    }
    if defined == 0 {
        return 0.0;
    }
    match config.undefined {
        UndefinedPolicy::Skip => sum / defined as f64,
        UndefinedPolicy::ZeroFill => sum / config.window as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn headline(id: &str, raw: &str) -> Headline {
        Headline {
            id: id.to_string(),
            date: d("2024-02-28"),
            raw_html: raw.to_string(),
            source: "test".to_string(),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let store = HeadlineStore::new(vec![
            headline("a1", "Apple rises"),
            headline("a2", "Tesla <b>falls</b>"),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        store.write_jsonl(&path).unwrap();
        let back = HeadlineStore::load_jsonl(&path).unwrap();
        assert_eq!(back.headlines(), store.headlines());
    }

    #[test]
    fn jsonl_parse_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"date\":\"2024-02-28\",\"raw_html\":\"x\",\"source\":\"s\"}\nnot json\n",
        )
        .unwrap();
        match HeadlineStore::load_jsonl(&path).unwrap_err() {
            NewsError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = HeadlineStore::new(vec![headline("a", "x"), headline("a", "y")]).unwrap_err();
        assert!(matches!(err, NewsError::DuplicateId(_)));
    }

    #[test]
    fn association_matches_alias_tokens_case_insensitively() {
        let p = Portfolio::default_universe();
        let a = associate_rule(&headline("h", "TESLA recalls 2m cars"), &p).unwrap();
        assert_eq!(a.ticker(), Some("TSLA"));
        assert!(!a.ambiguous);

        let a = associate_rule(&headline("h", "Shares of Nvidia soar"), &p).unwrap();
        assert_eq!(a.ticker(), Some("NVDA"));

        // Possessive: boundary chars are non-alphanumeric.
        let a = associate_rule(&headline("h", "Tesla's deliveries slip"), &p).unwrap();
        assert_eq!(a.ticker(), Some("TSLA"));
    }

    #[test]
    fn association_requires_token_boundaries() {
        let p = Portfolio::default_universe();
        // "metal" contains "meta" but is not a token match.
        let a = associate_rule(&headline("h", "Precious metal prices climb"), &p).unwrap();
        assert_eq!(a.ticker(), None);
        // Substring inside a longer ticker-like token.
        let a = associate_rule(&headline("h", "XOMA announces trial"), &p).unwrap();
        assert_eq!(a.ticker(), None);
    }

    #[test]
    fn association_ignores_concealed_text() {
        let p = Portfolio::default_universe();
        let a = associate_rule(
            &headline("h", "Rates hold<span style=\"display:none\">Nvidia</span>"),
            &p,
        )
        .unwrap();
        assert_eq!(a.ticker(), None);
    }

    #[test]
    fn homoglyph_laced_mention_is_unrecognized() {
        let p = Portfolio::default_universe();
        // "Теslа" with Cyrillic Т/а: case folding keeps scripts apart.
        let a = associate_rule(&headline("h", "\u{0422}esl\u{0430} recalls cars"), &p).unwrap();
        assert_eq!(a.ticker(), None);
    }

    #[test]
    fn ambiguity_longest_alias_then_portfolio_order() {
        let p = Portfolio::default_universe();
        // "Google" (6 chars) beats "Apple" (5).
        let a = associate_rule(&headline("h", "Apple sues Google over patents"), &p).unwrap();
        assert_eq!(a.ticker(), Some("GOOGL"));
        assert!(a.ambiguous);
        // Same length (4): AAPL precedes META in the portfolio.
        let a = associate_rule(&headline("h", "AAPL META pair trade"), &p).unwrap();
        assert_eq!(a.ticker(), Some("AAPL"));
        assert!(a.ambiguous);
    }

    #[test]
    fn lexicon_polarity_and_confidence() {
        let lex = Lexicon::default_lexicon();
        // "surge" (+0.8) out of 3 tokens.
        let s = score_sentiment_lexicon("h", "shares surge today", lex);
        assert!((s.polarity - 0.8).abs() < 1e-12);
        assert!((s.confidence - 1.0 / 3.0).abs() < 1e-12);

        // Payload appended: (+0.8 - 0.9 - 0.9) / 3 matched terms.
        let s = score_sentiment_lexicon("h", "shares surge today losses and layoffs", lex);
        assert!((s.polarity - (0.8 - 0.9 - 0.9) / 3.0).abs() < 1e-12);
        assert!(s.polarity < 0.0);

        // No matches: neutral with zero confidence.
        let s = score_sentiment_lexicon("h", "board meets on tuesday", lex);
        assert_eq!(s.polarity, 0.0);
        assert_eq!(s.confidence, 0.0);

        // Empty text.
        let s = score_sentiment_lexicon("h", "", lex);
        assert_eq!((s.polarity, s.confidence), (0.0, 0.0));
    }

    #[test]
    fn lexicon_matches_multiword_phrases_greedily() {
        let lex = Lexicon::default_lexicon();
        // "record high" scores as one phrase (0.85), not "record" alone.
        let s = score_sentiment_lexicon("h", "stock hits record high", lex);
        assert!((s.polarity - 0.85).abs() < 1e-12);
        assert!((s.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lexicon_scores_raw_markup_by_tokenizing_through_it() {
        let lex = Lexicon::default_lexicon();
        let raw = r#"good quarter<span style="display:none">losses and layoffs</span>"#;
        let s = score_sentiment_lexicon("h", raw, lex);
        // Concealed payload words count when scoring the raw fragment.
        assert!(s.polarity < 0.0);
    }

    #[test]
    fn daily_mean_rejects_mixed_groups_and_marks_empty_undefined() {
        let scored = |t: &str, day: &str, p: f64| ScoredHeadline {
            headline_id: "x".into(),
            ticker: t.into(),
            date: d(day),
            polarity: p,
            confidence: 1.0,
        };
        let err = daily_mean(
            "TSLA",
            d("2024-02-28"),
            &[scored("TSLA", "2024-02-28", 0.5), scored("NVDA", "2024-02-28", 0.5)],
        )
        .unwrap_err();
        assert!(matches!(err, NewsError::MixedGroup { .. }));

        let empty = daily_mean("TSLA", d("2024-02-28"), &[]).unwrap();
        assert_eq!(empty.count, 0);
        assert_eq!(empty.mean, None);
    }

    #[test]
    fn nine_score_day_averages_to_known_value() {
        let polarities = [0.713, 0.854, 0.908, 0.035, 0.832, 0.832, -0.290, -0.290, 0.901];
        let scores: Vec<ScoredHeadline> = polarities
            .iter()
            .enumerate()
            .map(|(i, p)| ScoredHeadline {
                headline_id: format!("h{i}"),
                ticker: "AAPL".into(),
                date: d("2024-02-28"),
                polarity: *p,
                confidence: 1.0,
            })
            .collect();
        let cell = daily_mean("AAPL", d("2024-02-28"), &scores).unwrap();
        assert_eq!(cell.count, 9);
        let expected: f64 = polarities.iter().sum::<f64>() / 9.0;
        assert!((cell.mean.unwrap() - expected).abs() < 1e-15);
        assert!((cell.mean.unwrap() - 0.4994444444444445).abs() < 1e-12);
    }

    #[test]
    fn smoothing_skips_undefined_days_by_default() {
        let mut daily = BTreeMap::new();
        daily.insert(
            ("TSLA".to_string(), d("2024-02-28")),
            DailySentiment { ticker: "TSLA".into(), date: d("2024-02-28"), count: 1, mean: Some(0.6) },
        );
        let cfg = SmoothingConfig::default();
        // Only day t itself has news: the average is 0.6, not 0.6/7.
        let s = smoothed_sentiment("TSLA", d("2024-02-28"), &daily, &cfg);
        assert!((s - 0.6).abs() < 1e-12);

        let zf = SmoothingConfig { undefined: UndefinedPolicy::ZeroFill, ..cfg };
        let s = smoothed_sentiment("TSLA", d("2024-02-28"), &daily, &zf);
        assert!((s - 0.6 / 7.0).abs() < 1e-12);

        // No news anywhere in the window: neutral zero.
        let s = smoothed_sentiment("TSLA", d("2024-03-28"), &daily, &cfg);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn smoothing_window_is_trailing_and_inclusive() {
        let mut daily = BTreeMap::new();
        for (day, mean) in [("2024-02-22", 0.2), ("2024-02-28", 0.8)] {
            daily.insert(
                ("TSLA".to_string(), d(day)),
                DailySentiment { ticker: "TSLA".into(), date: d(day), count: 1, mean: Some(mean) },
            );
        }
        let cfg = SmoothingConfig::default();
        // 2024-02-22 is 6 days before the 28th: inside the 7-day window.
        let s = smoothed_sentiment("TSLA", d("2024-02-28"), &daily, &cfg);
        assert!((s - 0.5).abs() < 1e-12);
        // One day later it falls out.
        let s = smoothed_sentiment("TSLA", d("2024-02-29"), &daily, &cfg);
        assert!((s - 0.8).abs() < 1e-12);
    }
}
