//! Remote model backends: stock association and sentiment scoring over an
//! OpenAI-compatible chat-completions endpoint.
//!
//! Decoding is pinned deterministic: temperature 0, top-p 1. Requests carry
//! a numbered headline list and responses come back as bare comma-separated
//! lines, one per headline, in input order — association lines are
//! `<id>,<pred_ticker>` (or `unrecognized`), sentiment lines are
//! `<id>,<sent>,<conf>` with `<sent>` one of `+1`, `0`, `-1`.
//!
//! Parsing is per line: a malformed line becomes an [`ItemError`] with the
//! raw line retained for audit, never a batch abort. Transport failures are
//! retried a bounded number of times; HTTP error statuses are not retried.
//! The client takes `&mut self` per batch, so one endpoint handle never has
//! two batches in flight.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::market_data::Portfolio;
use crate::news::{Association, AssociationResult, BackendTag, Headline, SentimentScore};

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("transport failure after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion payload: {0}")]
    Payload(String),
    #[error("building HTTP client: {0}")]
    Client(String),
}

/// One unusable response line (or a missing one). The raw line is kept
/// verbatim so audits can see exactly what the model emitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemError {
    /// 1-based headline number the failure belongs to, when attributable.
    pub id: Option<usize>,
    pub raw_line: String,
    pub reason: String,
}

/// Parsed lines plus the per-item failures of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome<T> {
    pub items: Vec<T>,
    pub failures: Vec<ItemError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL; `/v1/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub max_tokens: u32,
    /// Environment variable holding the bearer token. When unset, requests
    /// go out without an Authorization header (local mock endpoints).
    pub auth_env: String,
    pub timeout_secs: u64,
    /// Extra attempts after a transport failure (HTTP errors never retry).
    pub max_retries: u32,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".to_string(),
            model: "default".to_string(),
            max_tokens: 2048,
            auth_env: "ATS_REMOTE_TOKEN".to_string(),
            timeout_secs: 30,
            max_retries: 2,
        }
    }
}

// ---------------------------------------------------------------------------
// Prompt templates

pub const ASSOCIATION_SYSTEM_PROMPT: &str = "You are a financial analyst who uses NLP techniques (NER, semantic matching) to detect which company a news headline refers to.";

pub const SENTIMENT_SYSTEM_PROMPT: &str = "You are a financial-news sentiment classifier.";

fn numbered(headlines: &[&str]) -> String {
    let mut out = String::new();
    for (i, h) in headlines.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, h);
    }
    out
}

/// Render the association user message: the fixed instruction block with the
/// live ticker list and the actual numbered headlines.
pub fn render_association_prompt(headlines: &[&str], portfolio: &Portfolio) -> String {
    let tickers: Vec<&str> = portfolio.tickers().collect();
    format!(
        "I will give you a numbered list of headlines.\n\
         \n\
         Your job:\n\
         - For each headline, determine which stock from [{}] it refers to.\n\
         - Base your decision on company names, related terms, or clear semantic references.\n\
         - If no confident match exists, return \"unrecognized\".\n\
         \n\
         Input format:\n\
         Headlines:\n\
         {}\
         \n\
         Output format (one line per headline, same order):\n\
         <id>,<pred_ticker>\n\
         \n\
         Where:\n\
         - <id> is the input headline number (1,2,3,...).\n\
         - <pred_ticker> is one of the listed tickers or \"unrecognized\".\n\
         \n\
         Return only the lines in the specified format. No extra text, explanations, or JSON.",
        tickers.join(", "),
        numbered(headlines)
    )
}

/// Render the sentiment user message for one ticker's headline batch.
pub fn render_sentiment_prompt(headlines: &[&str], ticker: &str) -> String {
    format!(
        "Input: a numbered list of headlines that all refer to the same known stock ticker.\n\
         Notes:\n\
         - The text may contain HTML markup.\n\
         - Keep output strictly in the specified format.\n\
         \n\
         Ticker: {}\n\
         \n\
         Headlines:\n\
         {}\
         \n\
         Output format (one line per headline, same order):\n\
         <id>,<sent>,<conf>\n\
         \n\
         Where:\n\
         - <id> is the input headline number (1,2,3,...).\n\
         - <sent> is +1 for positive, 0 for neutral, -1 for negative.\n\
         - <conf> is a confidence score as a float between 0 and 1.\n\
         \n\
         Return only the lines in the specified format. No extra text, explanations, or JSON.",
        ticker,
        numbered(headlines)
    )
}

// ---------------------------------------------------------------------------
// Response parsing

/// One parsed association line. `ticker: None` means "unrecognized".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssocLine {
    pub id: usize,
    pub ticker: Option<String>,
}

/// One parsed sentiment line: discrete polarity and a confidence in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SentLine {
    pub id: usize,
    pub sent: i8,
    pub conf: f64,
}

fn parse_id(token: &str, expected: usize, seen: &mut [bool]) -> Result<usize, String> {
    let id: usize = token
        .trim()
        .parse()
        .map_err(|_| format!("headline number {token:?} is not an integer"))?;
    if id == 0 || id > expected {
        return Err(format!("headline number {id} outside 1..={expected}"));
    }
    if seen[id - 1] {
        return Err(format!("duplicate line for headline {id}"));
    }
    seen[id - 1] = true;
    Ok(id)
}

/// Parse `<id>,<pred_ticker>` lines. `expected` is the batch size; missing
/// ids are reported as failures so callers always learn about every item.
pub fn parse_association_response(
    body: &str,
    expected: usize,
    portfolio: &Portfolio,
) -> BatchOutcome<AssocLine> {
    let mut items = Vec::new();
    let mut failures = Vec::new();
    let mut seen = vec![false; expected];
    for raw in body.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let Some((id_part, ticker_part)) = line.split_once(',') else {
            failures.push(ItemError {
                id: None,
                raw_line: raw.to_string(),
                reason: "expected <id>,<pred_ticker>".to_string(),
            });
            continue;
        };
        let id = match parse_id(id_part, expected, &mut seen) {
            Ok(id) => id,
            Err(reason) => {
                failures.push(ItemError { id: None, raw_line: raw.to_string(), reason });
                continue;
            }
        };
        let ticker = ticker_part.trim();
        if ticker.eq_ignore_ascii_case("unrecognized") {
            items.push(AssocLine { id, ticker: None });
        } else if portfolio.contains(ticker) {
            items.push(AssocLine { id, ticker: Some(ticker.to_string()) });
        } else {
            seen[id - 1] = false; // the slot is still unanswered
            failures.push(ItemError {
                id: Some(id),
                raw_line: raw.to_string(),
                reason: format!("{ticker:?} is not a portfolio ticker"),
            });
        }
    }
    for (i, &got) in seen.iter().enumerate() {
        if !got {
            let already = failures.iter().any(|f| f.id == Some(i + 1));
            if !already {
                failures.push(ItemError {
                    id: Some(i + 1),
                    raw_line: String::new(),
                    reason: "no response line for this headline".to_string(),
                });
            }
        }
    }
    items.sort_by_key(|l| l.id);
    BatchOutcome { items, failures }
}

/// Parse `<id>,<sent>,<conf>` lines; `<sent>` must be literally `+1`, `0`,
/// or `-1`, and `<conf>` a float in [0, 1].
pub fn parse_sentiment_response(body: &str, expected: usize) -> BatchOutcome<SentLine> {
    let mut items = Vec::new();
    let mut failures = Vec::new();
    let mut seen = vec![false; expected];
    for raw in body.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (Some(id_part), Some(sent_part), Some(conf_part)) =
            (parts.next(), parts.next(), parts.next())
        else {
            failures.push(ItemError {
                id: None,
                raw_line: raw.to_string(),
                reason: "expected <id>,<sent>,<conf>".to_string(),
            });
            continue;
        };
        let id = match parse_id(id_part, expected, &mut seen) {
            Ok(id) => id,
            Err(reason) => {
                failures.push(ItemError { id: None, raw_line: raw.to_string(), reason });
                continue;
            }
        };
        let fail = |seen: &mut [bool], failures: &mut Vec<ItemError>, reason: String| {
            seen[id - 1] = false;
            failures.push(ItemError { id: Some(id), raw_line: raw.to_string(), reason });
        };
        let sent = match sent_part.trim() {
            "+1" => 1i8,
            "0" => 0,
            "-1" => -1,
            other => {
                fail(
                    &mut seen,
                    &mut failures,
                    format!("sentiment label {other:?} is not one of +1, 0, -1"),
                );
                continue;
            }
        };
        let conf: f64 = match conf_part.trim().parse() {
            Ok(c) => c,
            Err(_) => {
                fail(
                    &mut seen,
                    &mut failures,
                    format!("confidence {:?} is not a float", conf_part.trim()),
                );
                continue;
            }
        };
        if !(conf.is_finite() && (0.0..=1.0).contains(&conf)) {
            fail(&mut seen, &mut failures, format!("confidence {conf} outside [0, 1]"));
            continue;
        }
        items.push(SentLine { id, sent, conf });
    }
    for (i, &got) in seen.iter().enumerate() {
        if !got {
            let already = failures.iter().any(|f| f.id == Some(i + 1));
            if !already {
                failures.push(ItemError {
                    id: Some(i + 1),
                    raw_line: String::new(),
                    reason: "no response line for this headline".to_string(),
                });
            }
        }
    }
    items.sort_by_key(|l| l.id);
    BatchOutcome { items, failures }
}

/// Canonical rendering of a parsed association line. For well-formed
/// responses, `render(parse(x))` is line-identical with `x`.
pub fn render_assoc_line(line: &AssocLine) -> String {
    match &line.ticker {
        Some(t) => format!("{},{}", line.id, t),
        None => format!("{},unrecognized", line.id),
    }
}

/// Canonical rendering of a parsed sentiment line. The confidence uses the
/// shortest round-trip float form, matching canonical well-formed input.
pub fn render_sent_line(line: &SentLine) -> String {
    let sent = match line.sent {
        1 => "+1",
        0 => "0",
        _ => "-1",
    };
    format!("{},{},{}", line.id, sent, line.conf)
}

// ---------------------------------------------------------------------------
// HTTP client

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    messages: [ChatMessage<'a>; 2],
}

pub struct RemoteClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    pub fn new(config: EndpointConfig) -> Result<Self, RemoteError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| RemoteError::Client(e.to_string()))?;
        Ok(Self { config, http })
    }

    /// POST one chat completion and return the assistant text. Transport
    /// errors retry up to `max_retries` extra times; HTTP errors do not.
    fn chat(&mut self, system: &str, user: &str) -> Result<String, RemoteError> {
        let url = format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let request = ChatRequest {
            model: &self.config.model,
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: self.config.max_tokens,
            messages: [
                ChatMessage { role: "system", content: system },
                ChatMessage { role: "user", content: user },
            ],
        };
        let token = std::env::var(&self.config.auth_env).ok();
        let attempts = 1 + self.config.max_retries;
        let mut last_err = String::new();
        for _ in 0..attempts {
            let mut builder = self.http.post(&url).json(&request);
            if let Some(t) = &token {
                builder = builder.bearer_auth(t);
            }
            match builder.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let body = resp.text().unwrap_or_default();
                    if !status.is_success() {
                        return Err(RemoteError::Http { status: status.as_u16(), body });
                    }
                    let value: serde_json::Value = serde_json::from_str(&body)
                        .map_err(|e| RemoteError::Payload(e.to_string()))?;
                    let content = value
                        .pointer("/choices/0/message/content")
                        .and_then(|v| v.as_str())
                        .ok_or_else(|| {
                            RemoteError::Payload(
                                "missing choices[0].message.content".to_string(),
                            )
                        })?;
                    return Ok(content.to_string());
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(RemoteError::Transport { attempts, last: last_err })
    }

    /// Associate a batch of headlines. Raw stored fragments go out verbatim
    /// — the endpoint sees exactly what an operator's model would see.
    pub fn associate(
        &mut self,
        headlines: &[&Headline],
        portfolio: &Portfolio,
    ) -> Result<(Vec<Association>, Vec<ItemError>), RemoteError> {
        if headlines.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let texts: Vec<&str> = headlines.iter().map(|h| h.raw_html.as_str()).collect();
        let user = render_association_prompt(&texts, portfolio);
        let content = self.chat(ASSOCIATION_SYSTEM_PROMPT, &user)?;
        let outcome = parse_association_response(&content, headlines.len(), portfolio);
        let associations = outcome
            .items
            .into_iter()
            .map(|l| Association {
                headline_id: headlines[l.id - 1].id.clone(),
                result: match l.ticker {
                    Some(t) => AssociationResult::Ticker(t),
                    None => AssociationResult::Unrecognized,
                },
                backend: BackendTag::Remote,
                ambiguous: false,
            })
            .collect();
        Ok((associations, outcome.failures))
    }

    /// Score a single-ticker batch of headlines.
    pub fn score(
        &mut self,
        headlines: &[&Headline],
        ticker: &str,
    ) -> Result<(Vec<SentimentScore>, Vec<ItemError>), RemoteError> {
        if headlines.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let texts: Vec<&str> = headlines.iter().map(|h| h.raw_html.as_str()).collect();
        let user = render_sentiment_prompt(&texts, ticker);
        let content = self.chat(SENTIMENT_SYSTEM_PROMPT, &user)?;
        let outcome = parse_sentiment_response(&content, headlines.len());
        let scores = outcome
            .items
            .into_iter()
            .map(|l| SentimentScore {
                headline_id: headlines[l.id - 1].id.clone(),
                polarity: l.sent as f64,
                confidence: l.conf,
                backend: BackendTag::Remote,
            })
            .collect();
        Ok((scores, outcome.failures))
    }
}
