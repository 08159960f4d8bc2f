//! Adversarial headline transformations.
//!
//! Two human-imperceptible attacks on a news-driven pipeline:
//!
//! - **Homoglyph substitution** swaps selected Latin characters inside an
//!   entity mention (ticker symbol or company name) for visually identical
//!   Cyrillic confusables. The rendered glyphs are unchanged for a human
//!   reader, but codepoint-exact entity matching no longer fires, so the
//!   headline is misrouted away from its ticker.
//! - **Hidden-text injection** appends a concealed span (default payload
//!   "losses and layoffs") that a browser never renders but a scraper-fed
//!   model happily reads, dragging sentiment negative.
//!
//! Both operate on the raw headline fragment and leave every markup byte
//! untouched. [`enumerate_targets`] plans a sweep over all (day, ticker)
//! pairs that have at least one cleanly associated headline; [`apply_attack`]
//! produces the attacked copy-on-write store for one target.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{Calendar, Portfolio};
use crate::news::{Headline, HeadlineStore};
use crate::sanitizer::{self, SanitizeError, SegmentKind};

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("invalid homoglyph table: {0}")]
    InvalidTable(String),
    #[error("unknown ticker {0}")]
    UnknownTicker(String),
    #[error("attack target set is empty: no (day, ticker) pair has an associated headline")]
    EmptyTargetSet,
    #[error("headline {id}: malformed fragment: {source}")]
    MalformedFragment { id: String, source: SanitizeError },
}

// ---------------------------------------------------------------------------
// Homoglyph table

/// An invertible Latin→Cyrillic confusable mapping.
///
/// Invariants enforced at construction: the forward map is injective, its
/// domain (Latin) and codomain (Cyrillic) are disjoint, and the reverse map
/// is its exact inverse. [`HomoglyphTable::with_unidirectional`] can add
/// extra forward-only rows whose reverse is already claimed; round-tripping
/// those rows lands on the reverse owner, never back on the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomoglyphTable {
    forward: BTreeMap<char, char>,
    reverse: BTreeMap<char, char>,
}

/// The stock confusable rows: uppercase and lowercase Latin letters with a
/// Cyrillic twin that renders identically in common fonts. Letters with no
/// visually exact twin (G, L, Z, …) are deliberately absent so that the
/// table stays invertible.
const DEFAULT_CONFUSABLES: &[(char, char)] = &[
    ('A', '\u{0410}'),
    ('B', '\u{0412}'),
    ('C', '\u{0421}'),
    ('E', '\u{0415}'),
    ('H', '\u{041D}'),
    ('I', '\u{0406}'),
    ('J', '\u{0408}'),
    ('K', '\u{041A}'),
    ('M', '\u{041C}'),
    ('O', '\u{041E}'),
    ('P', '\u{0420}'),
    ('S', '\u{0405}'),
    ('T', '\u{0422}'),
    ('X', '\u{0425}'),
    ('Y', '\u{0423}'),
    ('a', '\u{0430}'),
    ('c', '\u{0441}'),
    ('e', '\u{0435}'),
    ('h', '\u{04BB}'),
    ('i', '\u{0456}'),
    ('j', '\u{0458}'),
    ('m', '\u{043C}'),
    ('o', '\u{043E}'),
    ('p', '\u{0440}'),
    ('s', '\u{0455}'),
    ('x', '\u{0445}'),
    ('y', '\u{0443}'),
];

impl HomoglyphTable {
    pub fn new(pairs: &[(char, char)]) -> Result<Self, AdversaryError> {
        let mut forward = BTreeMap::new();
        let mut reverse = BTreeMap::new();
        for &(from, to) in pairs {
            if forward.insert(from, to).is_some() {
                return Err(AdversaryError::InvalidTable(format!(
                    "duplicate source character {from:?}"
                )));
            }
            if reverse.insert(to, from).is_some() {
                return Err(AdversaryError::InvalidTable(format!(
                    "target character {to:?} used twice (forward map must be injective)"
                )));
            }
        }
        let domain: BTreeSet<char> = forward.keys().copied().collect();
        let codomain: BTreeSet<char> = forward.values().copied().collect();
        if let Some(c) = domain.intersection(&codomain).next() {
            return Err(AdversaryError::InvalidTable(format!(
                "character {c:?} appears on both sides"
            )));
        }
        Ok(Self { forward, reverse })
    }

    /// The 27-row default table.
    pub fn default_confusables() -> Self {
        Self::new(DEFAULT_CONFUSABLES).expect("default table is valid")
    }

    /// Add a forward-only row. `to` must already be a target of the table so
    /// normalization still maps it somewhere; the existing reverse entry is
    /// kept, which makes this row intentionally non-round-tripping.
    pub fn with_unidirectional(mut self, from: char, to: char) -> Result<Self, AdversaryError> {
        if self.forward.contains_key(&from) || self.reverse.contains_key(&from) {
            return Err(AdversaryError::InvalidTable(format!(
                "character {from:?} already present"
            )));
        }
        if !self.reverse.contains_key(&to) {
            return Err(AdversaryError::InvalidTable(format!(
                "target {to:?} has no reverse entry; add it as a regular pair instead"
            )));
        }
        self.forward.insert(from, to);
        Ok(self)
    }

    /// Default table plus the lossy `Z → У` row (normalizes to `Y`).
    pub fn extended_confusables() -> Self {
        Self::default_confusables()
            .with_unidirectional('Z', '\u{0423}')
            .expect("extension row is valid")
    }

    pub fn to_confusable(&self, c: char) -> Option<char> {
        self.forward.get(&c).copied()
    }

    pub fn to_ascii(&self, c: char) -> Option<char> {
        self.reverse.get(&c).copied()
    }

    pub fn forward_pairs(&self) -> impl Iterator<Item = (char, char)> + '_ {
        self.forward.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Curated entity renderings

/// Character positions substituted for each known entity string.
///
/// The realized attack forms swap only a curated subset of the substitutable
/// positions per entity — enough to defeat codepoint matching while keeping
/// the string visually natural in mixed-script font rendering. Entities not
/// listed here fall back to substituting every mappable character.
const CURATED_MASKS: &[(&str, &[usize])] = &[
    // Ticker symbols.
    ("GOOGL", &[1, 2]),
    ("AAPL", &[0, 1]),
    ("NVDA", &[3]),
    ("MSFT", &[0]),
    ("AMZN", &[0, 1]),
    ("META", &[0, 1, 3]),
    ("TSLA", &[0, 3]),
    ("LLY", &[2]),
    ("JPM", &[0]),
    ("XOM", &[0, 1, 2]),
    // Company names.
    ("Google", &[1, 2, 5]),
    ("Alphabet", &[0, 2, 4, 6]),
    ("Apple", &[0, 1, 2, 4]),
    ("Nvidia", &[2, 5]),
    ("Microsoft", &[0, 6]),
    ("Amazon", &[0, 1, 4]),
    ("Meta", &[0, 1, 3]),
    ("Tesla", &[0, 4]),
    ("Eli Lilly", &[0, 8]),
    ("JPMorgan Chase", &[0, 2]),
    ("Exxon Mobil", &[0, 2, 3, 6]),
];

/// Render the attacked form of one entity string.
///
/// Curated entities substitute exactly their masked positions; anything else
/// substitutes every character the table can map. Characters the table
/// cannot map are left unchanged either way.
pub fn attack_entity_string(entity: &str, table: &HomoglyphTable) -> String {
    let mask: Option<&[usize]> = CURATED_MASKS
        .iter()
        .find(|(name, _)| *name == entity)
        .map(|(_, m)| *m);
    entity
        .chars()
        .enumerate()
        .map(|(i, c)| {
            let eligible = match mask {
                Some(m) => m.contains(&i),
                None => true,
            };
            if eligible {
                table.to_confusable(c).unwrap_or(c)
            } else {
                c
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Attack specs

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Homoglyph,
    HiddenText,
    /// No-op transform: the attacked store equals the clean store. Used to
    /// calibrate the harness — every paired run must come back all-zero.
    Identity,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Homoglyph => "homoglyph",
            AttackKind::HiddenText => "hidden_text",
            AttackKind::Identity => "identity",
        }
    }
}

/// One attack instance: transform the target ticker's headlines on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub ticker: String,
    pub date: NaiveDate,
}

/// How injected text is kept invisible to a human reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concealment {
    DisplayNone,
    FontSizeZero,
    /// Near-background text color; off by default because detectability
    /// depends on the page the headline lands on.
    ColorMatch,
}

impl Concealment {
    fn style(&self) -> &'static str {
        match self {
            Concealment::DisplayNone => "display:none",
            Concealment::FontSizeZero => "font-size:0pt",
            Concealment::ColorMatch => "color:#FFFFFE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenTextConfig {
    pub payload: String,
    pub concealment: Concealment,
}

impl Default for HiddenTextConfig {
    fn default() -> Self {
        Self {
            payload: "losses and layoffs".to_string(),
            concealment: Concealment::DisplayNone,
        }
    }
}

// ---------------------------------------------------------------------------
// Transforms

/// A transformed headline plus whether anything actually changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformedHeadline {
    pub headline: Headline,
    pub changed: bool,
}

/// Replace every visible occurrence of the ticker symbol or one of its
/// aliases (case-sensitive, codepoint-exact) with its confusable rendering.
///
/// Only visible text nodes are rewritten; markup and concealed content are
/// copied byte-identically. When several aliases match at one position the
/// longest wins. Returns `changed = false` when no occurrence was found.
pub fn substitute_entity(
    headline: &Headline,
    ticker: &str,
    portfolio: &Portfolio,
    table: &HomoglyphTable,
) -> Result<TransformedHeadline, AdversaryError> {
    let aliases = portfolio
        .aliases_of(ticker)
        .ok_or_else(|| AdversaryError::UnknownTicker(ticker.to_string()))?;
    // Longest-first so "JPMorgan Chase" wins over a hypothetical "JPM" hit
    // at the same offset.
    let mut by_len: Vec<&str> = aliases.iter().map(String::as_str).collect();
    by_len.sort_by_key(|a| std::cmp::Reverse(a.len()));

    let seg = sanitizer::segment_html(&headline.raw_html).map_err(|source| {
        AdversaryError::MalformedFragment { id: headline.id.clone(), source }
    })?;

    let raw = &headline.raw_html;
    let mut out = String::with_capacity(raw.len());
    let mut changed = false;
    for s in &seg.segments {
        let slice = &raw[s.start..s.end];
        match s.kind {
            SegmentKind::Text { concealed: false } => {
                out.push_str(&replace_aliases(slice, &by_len, table, &mut changed));
            }
            _ => out.push_str(slice),
        }
    }

    Ok(TransformedHeadline {
        headline: Headline {
            id: format!("{}#homoglyph", headline.id),
            date: headline.date,
            raw_html: out,
            source: headline.source.clone(),
        },
        changed,
    })
}

fn replace_aliases(
    text: &str,
    aliases_longest_first: &[&str],
    table: &HomoglyphTable,
    changed: &mut bool,
) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0usize;
    'outer: while i < text.len() {
        for alias in aliases_longest_first {
            if text[i..].starts_with(alias) {
                out.push_str(&attack_entity_string(alias, table));
                *changed = true;
                i += alias.len();
                continue 'outer;
            }
        }
        let c = text[i..].chars().next().expect("in-bounds char");
        out.push(c);
        i += c.len_utf8();
    }
    out
}

/// Append a concealed span carrying `payload` to the headline fragment.
/// The visible text is unchanged; a scraper that ignores styling will read
/// the payload as part of the headline.
pub fn inject_hidden_text(
    headline: &Headline,
    config: &HiddenTextConfig,
) -> Result<TransformedHeadline, AdversaryError> {
    // Reject fragments the scanner cannot make sense of; appending to an
    // unterminated tag would put the payload inside markup.
    sanitizer::segment_html(&headline.raw_html).map_err(|source| {
        AdversaryError::MalformedFragment { id: headline.id.clone(), source }
    })?;
    let raw_html = format!(
        "{}<span style=\"{}\">{}</span>",
        headline.raw_html,
        config.concealment.style(),
        config.payload
    );
    Ok(TransformedHeadline {
        headline: Headline {
            id: format!("{}#hidden_text", headline.id),
            date: headline.date,
            raw_html,
            source: headline.source.clone(),
        },
        changed: true,
    })
}

// ---------------------------------------------------------------------------
// Sweep planning and application

/// One (day, ticker) attack target and how many headlines it covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub ticker: String,
    pub date: NaiveDate,
    pub headline_count: usize,
}

/// All (day, ticker) pairs inside the calendar with at least one cleanly
/// associated headline, ordered by (ticker, date). Errors when empty.
pub fn enumerate_targets(
    store: &HeadlineStore,
    associations: &BTreeMap<String, Option<String>>,
    portfolio: &Portfolio,
    calendar: &Calendar,
) -> Result<Vec<Target>, AdversaryError> {
    let mut counts: BTreeMap<(String, NaiveDate), usize> = BTreeMap::new();
    for h in store.headlines() {
        let Some(Some(ticker)) = associations.get(&h.id) else {
            continue;
        };
        if !portfolio.contains(ticker) || !calendar.contains(h.date) {
            continue;
        }
        *counts.entry((ticker.clone(), h.date)).or_insert(0) += 1;
    }
    if counts.is_empty() {
        return Err(AdversaryError::EmptyTargetSet);
    }
    Ok(counts
        .into_iter()
        .map(|((ticker, date), headline_count)| Target { ticker, date, headline_count })
        .collect())
}

/// Mapping from a clean headline id to its attacked replacement's id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TouchedPair {
    pub clean_id: String,
    pub attacked_id: String,
}

/// The attacked store for one target, plus which headlines were touched.
#[derive(Debug, Clone)]
pub struct AppliedAttack {
    pub store: HeadlineStore,
    pub touched: Vec<TouchedPair>,
    /// Headlines matched by the target but left unchanged (e.g. the entity
    /// string never occurs verbatim, so substitution had nothing to do).
    pub no_ops: usize,
}

/// Build the attacked headline store for `spec`: every headline dated
/// `spec.date` and cleanly associated with `spec.ticker` is transformed;
/// everything else is carried over byte-identically.
pub fn apply_attack(
    spec: &AttackSpec,
    store: &HeadlineStore,
    associations: &BTreeMap<String, Option<String>>,
    portfolio: &Portfolio,
    table: &HomoglyphTable,
    hidden: &HiddenTextConfig,
) -> Result<AppliedAttack, AdversaryError> {
    if !portfolio.contains(&spec.ticker) {
        return Err(AdversaryError::UnknownTicker(spec.ticker.clone()));
    }
    let mut headlines = Vec::with_capacity(store.len());
    let mut touched = Vec::new();
    let mut no_ops = 0usize;
    for h in store.headlines() {
        let is_target = h.date == spec.date
            && associations.get(&h.id).map(|a| a.as_deref() == Some(spec.ticker.as_str()))
                == Some(true);
        if !is_target {
            headlines.push(h.clone());
            continue;
        }
        match spec.kind {
            AttackKind::Identity => {
                touched.push(TouchedPair {
                    clean_id: h.id.clone(),
                    attacked_id: h.id.clone(),
                });
                headlines.push(h.clone());
            }
            AttackKind::Homoglyph => {
                let t = substitute_entity(h, &spec.ticker, portfolio, table)?;
                if t.changed {
                    touched.push(TouchedPair {
                        clean_id: h.id.clone(),
                        attacked_id: t.headline.id.clone(),
                    });
                    headlines.push(t.headline);
                } else {
                    no_ops += 1;
                    headlines.push(h.clone());
                }
            }
            AttackKind::HiddenText => {
                let t = inject_hidden_text(h, hidden)?;
                touched.push(TouchedPair {
                    clean_id: h.id.clone(),
                    attacked_id: t.headline.id.clone(),
                });
                headlines.push(t.headline);
            }
        }
    }
    let store = HeadlineStore::new(headlines).expect("attacked ids stay unique");
    Ok(AppliedAttack { store, touched, no_ops })
}
