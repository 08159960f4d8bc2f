//! Headline sanitization: visible-text extraction and homoglyph
//! normalization.
//!
//! Deployed in front of the news models, this stage reduces a raw headline
//! fragment to what a human reader actually sees. Extraction is a small
//! hand-rolled tag/style scanner — headlines are short fragments, not
//! documents, so a full DOM engine is deliberately out of scope. An element
//! is concealed when its normalized inline style carries `display:none` or a
//! zero font size (any unit); concealed subtrees contribute no visible text.
//! Normalization maps known confusable codepoints back to ASCII via the
//! reverse homoglyph table.
//!
//! Plain text with no markup and no confusables passes through byte-exact.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::HomoglyphTable;

#[derive(Debug, Error)]
pub enum SanitizeError {
    #[error("unterminated tag starting at byte {at}")]
    UnterminatedTag { at: usize },
    #[error("unterminated quoted attribute value starting at byte {at}")]
    UnterminatedQuote { at: usize },
}

/// One scanned span of the raw fragment, by byte range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub kind: SegmentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    /// Tags, comments, doctypes, script/style bodies. Copied verbatim by
    /// transforms; never part of visible text.
    Markup,
    /// A text node. `concealed` is true inside any hidden element.
    Text { concealed: bool },
}

/// Scanner output: the segment list plus how many elements were concealed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    /// Number of elements whose own style matched a concealment predicate.
    pub hidden_elements: usize,
}

/// Visible text plus the hidden-element count found along the way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub text: String,
    pub hidden_elements: usize,
}

/// Per-headline sanitization outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub headline_id: String,
    pub hidden_elements_removed: usize,
    pub homoglyphs_normalized: usize,
    /// True iff any counter above is nonzero.
    pub suspicious: bool,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanitizedHeadline {
    pub text: String,
    pub report: DetectionReport,
}

/// Elements that never take content and so never get a stack frame.
const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta",
    "source", "track", "wbr",
];

/// Does a normalized `style` attribute hide the element's content?
/// Normalization: lowercase, all whitespace stripped, declarations split
/// on `;`. Matches `display:none` and `font-size:<zero><any unit>`.
fn style_conceals(style: &str) -> bool {
    let normalized: String = style
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    for decl in normalized.split(';') {
        let Some((prop, value)) = decl.split_once(':') else {
            continue;
        };
        match prop {
            "display" if value == "none" => return true,
            "font-size" => {
                if font_size_is_zero(value) {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

/// Accepts `0`, `0pt`, `0.0px`, `.0em`, `0%`, … — a numeric zero followed by
/// at most an alphabetic or `%` unit.
fn font_size_is_zero(value: &str) -> bool {
    let num_end = value
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.' || *c == '+' || *c == '-'))
        .map(|(i, _)| i)
        .unwrap_or(value.len());
    let (num, unit) = value.split_at(num_end);
    if num.is_empty() || !unit.chars().all(|c| c.is_ascii_alphabetic() || c == '%') {
        return false;
    }
    matches!(num.parse::<f64>(), Ok(v) if v == 0.0)
}

/// A parsed open/close tag, character-level.
struct Tag {
    name: String,
    closing: bool,
    self_closing: bool,
    style: Option<String>,
    end: usize, // byte offset just past '>'
}

/// Parse the tag starting at byte `at` (which holds '<'). Returns `None` when
/// the '<' does not open a real tag and should be treated as literal text.
fn parse_tag(raw: &str, at: usize) -> Result<Option<Tag>, SanitizeError> {
    let bytes = raw.as_bytes();
    let mut i = at + 1;
    let mut closing = false;
    if i < bytes.len() && bytes[i] == b'/' {
        closing = true;
        i += 1;
    }
    if i >= bytes.len() || !bytes[i].is_ascii_alphabetic() {
        return Ok(None); // "<" in prose, e.g. "P < 5" — literal text
    }
    let name_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'-') {
        i += 1;
    }
    let name = raw[name_start..i].to_ascii_lowercase();

    let mut style = None;
    let mut self_closing = false;
    loop {
        // Skip whitespace between attributes.
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(SanitizeError::UnterminatedTag { at });
        }
        match bytes[i] {
            b'>' => {
                return Ok(Some(Tag {
                    name,
                    closing,
                    self_closing,
                    style,
                    end: i + 1,
                }));
            }
            b'/' => {
                self_closing = true;
                i += 1;
            }
            _ => {
                // Attribute name.
                let attr_start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && bytes[i] != b'='
                    && bytes[i] != b'>'
                    && bytes[i] != b'/'
                {
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(SanitizeError::UnterminatedTag { at });
                }
                let attr_name = raw[attr_start..i].to_ascii_lowercase();
                while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                let mut value = None;
                if i < bytes.len() && bytes[i] == b'=' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                        i += 1;
                    }
                    if i >= bytes.len() {
                        return Err(SanitizeError::UnterminatedTag { at });
                    }
                    if bytes[i] == b'"' || bytes[i] == b'\'' {
                        let quote = bytes[i];
                        let vstart = i + 1;
                        let mut j = vstart;
                        while j < bytes.len() && bytes[j] != quote {
                            j += 1;
                        }
                        if j >= bytes.len() {
                            return Err(SanitizeError::UnterminatedQuote { at: i });
                        }
                        value = Some(raw[vstart..j].to_string());
                        i = j + 1;
                    } else {
                        // Unquoted value: runs to whitespace or '>'.
                        let vstart = i;
                        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'>'
                        {
                            i += 1;
                        }
                        value = Some(raw[vstart..i].to_string());
                    }
                }
                if attr_name == "style" {
                    if let Some(v) = value {
                        style = Some(v);
                    }
                }
            }
        }
    }
}

/// Scan a headline fragment into markup and text segments.
///
/// Best-effort on malformed input: stray `<` is literal text, unknown close
/// tags are ignored, unclosed elements end at EOF. Errors only when the input
/// is unbalanced beyond recovery (EOF inside a tag or a quoted attribute).
pub fn segment_html(raw: &str) -> Result<Segmentation, SanitizeError> {
    let bytes = raw.as_bytes();
    let mut segments = Vec::new();
    let mut hidden_elements = 0usize;
    // Stack of (element name, conceals) frames for open elements.
    let mut stack: Vec<(String, bool)> = Vec::new();
    let mut concealed_depth = 0usize;
    let mut i = 0usize;
    let mut text_start = 0usize;

    let flush_text = |segments: &mut Vec<Segment>, start: usize, end: usize, concealed: bool| {
        if end > start {
            segments.push(Segment {
                start,
                end,
                kind: SegmentKind::Text { concealed },
            });
        }
    };

    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        // Comments and doctype/processing blocks.
        if raw[i..].starts_with("<!--") {
            flush_text(&mut segments, text_start, i, concealed_depth > 0);
            let close = raw[i + 4..].find("-->").map(|p| i + 4 + p + 3).unwrap_or(bytes.len());
            segments.push(Segment { start: i, end: close, kind: SegmentKind::Markup });
            i = close;
            text_start = i;
            continue;
        }
        if raw[i..].starts_with("<!") || raw[i..].starts_with("<?") {
            flush_text(&mut segments, text_start, i, concealed_depth > 0);
            let close = raw[i..].find('>').map(|p| i + p + 1).unwrap_or(bytes.len());
            segments.push(Segment { start: i, end: close, kind: SegmentKind::Markup });
            i = close;
            text_start = i;
            continue;
        }
        match parse_tag(raw, i)? {
            None => {
                i += 1; // literal '<'
            }
            Some(tag) => {
                flush_text(&mut segments, text_start, i, concealed_depth > 0);
                segments.push(Segment { start: i, end: tag.end, kind: SegmentKind::Markup });
                i = tag.end;
                text_start = i;

                if tag.closing {
                    // Pop to the matching frame; ignore an unmatched close.
                    if let Some(pos) = stack.iter().rposition(|(n, _)| *n == tag.name) {
                        for (_, conceals) in stack.drain(pos..) {
                            if conceals {
                                concealed_depth -= 1;
                            }
                        }
                    }
                    continue;
                }

                let conceals = tag.style.as_deref().map(style_conceals).unwrap_or(false);
                if conceals {
                    hidden_elements += 1;
                }
                // script/style bodies are never visible text: swallow the
                // raw content up to the matching close tag as markup.
                if tag.name == "script" || tag.name == "style" {
                    let close_pat = format!("</{}", tag.name);
                    let lower = raw[i..].to_ascii_lowercase();
                    let body_end = lower.find(&close_pat).map(|p| i + p).unwrap_or(bytes.len());
                    let tag_end = raw[body_end..]
                        .find('>')
                        .map(|p| body_end + p + 1)
                        .unwrap_or(bytes.len());
                    segments.push(Segment { start: i, end: tag_end, kind: SegmentKind::Markup });
                    i = tag_end;
                    text_start = i;
                    continue;
                }
                if tag.self_closing || VOID_ELEMENTS.contains(&tag.name.as_str()) {
                    continue;
                }
                if conceals {
                    concealed_depth += 1;
                }
                stack.push((tag.name, conceals));
            }
        }
    }
    flush_text(&mut segments, text_start, bytes.len(), concealed_depth > 0);
    Ok(Segmentation { segments, hidden_elements })
}

/// Decode the common named entities plus numeric (`&#123;`, `&#x1F;`) forms.
/// Anything unrecognized is passed through literally.
fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        if bytes[i] != b'&' {
            let ch_len = utf8_len(bytes[i]);
            out.push_str(&text[i..i + ch_len]);
            i += ch_len;
            continue;
        }
        let rest = &text[i..];
        let semi = rest.find(';');
        let decoded = semi.and_then(|s| {
            let body = &rest[1..s];
            let ch = match body {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some('\u{00A0}'),
                _ => {
                    if let Some(hex) = body.strip_prefix("#x").or_else(|| body.strip_prefix("#X")) {
                        u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
                    } else if let Some(dec) = body.strip_prefix('#') {
                        dec.parse::<u32>().ok().and_then(char::from_u32)
                    } else {
                        None
                    }
                }
            };
            ch.map(|c| (c, s + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                i += len;
            }
            None => {
                out.push('&');
                i += 1;
            }
        }
    }
    out
}

fn utf8_len(first_byte: u8) -> usize {
    match first_byte {
        b if b < 0x80 => 1,
        b if b >> 5 == 0b110 => 2,
        b if b >> 4 == 0b1110 => 3,
        _ => 4,
    }
}

/// Reduce a raw headline fragment to its human-visible text.
///
/// Concealed subtrees are dropped, tags are stripped, entities are decoded.
/// Visible text nodes are concatenated exactly as they appear — no whitespace
/// is synthesized — so markup-free input comes back byte-identical.
pub fn extract_visible_text(raw: &str) -> Result<Extraction, SanitizeError> {
    let seg = segment_html(raw)?;
    let mut text = String::with_capacity(raw.len());
    for s in &seg.segments {
        if let SegmentKind::Text { concealed: false } = s.kind {
            text.push_str(&decode_entities(&raw[s.start..s.end]));
        }
    }
    Ok(Extraction { text, hidden_elements: seg.hidden_elements })
}

/// Map confusable codepoints back through the reverse homoglyph table.
/// Returns the normalized text and how many characters changed.
pub fn normalize_homoglyphs(text: &str, table: &HomoglyphTable) -> (String, usize) {
    let mut out = String::with_capacity(text.len());
    let mut count = 0usize;
    for c in text.chars() {
        match table.to_ascii(c) {
            Some(mapped) => {
                out.push(mapped);
                count += 1;
            }
            None => out.push(c),
        }
    }
    (out, count)
}

/// Full sanitization of one headline: extract visible text, then normalize
/// homoglyphs. The report's `suspicious` flag is set iff anything was found.
pub fn sanitize(
    headline_id: &str,
    raw_html: &str,
    table: &HomoglyphTable,
) -> Result<SanitizedHeadline, SanitizeError> {
    let started = Instant::now();
    let extraction = extract_visible_text(raw_html)?;
    let (text, normalized) = normalize_homoglyphs(&extraction.text, table);
    let elapsed_secs = started.elapsed().as_secs_f64();
    let suspicious = extraction.hidden_elements > 0 || normalized > 0;
    Ok(SanitizedHeadline {
        text,
        report: DetectionReport {
            headline_id: headline_id.to_string(),
            hidden_elements_removed: extraction.hidden_elements,
            homoglyphs_normalized: normalized,
            suspicious,
            elapsed_secs,
        },
    })
}
