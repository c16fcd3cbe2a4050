//! Placeholder masking for spans the contraction rules must never touch.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::{byte_to_char, char_to_byte};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtectionKind {
    Acronym,
    Honorific,
    Url,
}

impl ProtectionKind {
    fn tag(self) -> char {
        match self {
            ProtectionKind::Acronym => 'A',
            ProtectionKind::Honorific => 'H',
            ProtectionKind::Url => 'U',
        }
    }
}

/// A masked region of the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectionSpan {
    /// Character offsets into the original text.
    pub start: usize,
    pub end: usize,
    pub kind: ProtectionKind,
    pub placeholder_token: String,
    pub original: String,
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)\b(?:https?://|www\.)[^\s<>"]+"#).unwrap())
}

fn acronym_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(?:\p{L}{1,3}\.){2,}").unwrap())
}

fn honorific_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(?:Mr|Mrs|Ms|Mx|Dr|Prof|Sr|Jr|St|Mt|Rev|Gen|Capt|Lt|Col|Sgt|Hon|Fr)\.")
            .unwrap()
    })
}

/// Pick a private-use character that does not occur in `text`, so
/// placeholders can never collide with input.
fn marker_for(text: &str) -> char {
    (0xE000u32..=0xF8FF)
        .filter_map(char::from_u32)
        .find(|c| !text.contains(*c))
        .expect("text uses every private-use character")
}

/// Replace URLs, dotted acronyms and honorifics with unique placeholders.
pub fn protect(text: &str) -> (String, Vec<ProtectionSpan>) {
    let mut found: Vec<(usize, usize, ProtectionKind)> = Vec::new();
    for m in url_re().find_iter(text) {
        let trimmed = m
            .as_str()
            .trim_end_matches(['.', ',', '!', '?', ')', ';', ':']);
        if !trimmed.is_empty() {
            found.push((m.start(), m.start() + trimmed.len(), ProtectionKind::Url));
        }
    }
    for (re, kind) in [
        (acronym_re(), ProtectionKind::Acronym),
        (honorific_re(), ProtectionKind::Honorific),
    ] {
        for m in re.find_iter(text) {
            let overlaps = found.iter().any(|&(s, e, _)| m.start() < e && s < m.end());
            if !overlaps {
                found.push((m.start(), m.end(), kind));
            }
        }
    }
    if found.is_empty() {
        return (text.to_owned(), Vec::new());
    }
    found.sort_by_key(|&(s, _, _)| s);

    let marker = marker_for(text);
    let mut masked = String::with_capacity(text.len());
    let mut spans = Vec::with_capacity(found.len());
    let mut cursor = 0;
    for (i, (s, e, kind)) in found.into_iter().enumerate() {
        masked.push_str(&text[cursor..s]);
        let token = format!("{marker}{}{i}{marker}", kind.tag());
        masked.push_str(&token);
        spans.push(ProtectionSpan {
            start: byte_to_char(text, s),
            end: byte_to_char(text, e),
            kind,
            placeholder_token: token,
            original: text[s..e].to_owned(),
        });
        cursor = e;
    }
    masked.push_str(&text[cursor..]);
    (masked, spans)
}

/// Restore every placeholder to its original text.
pub fn unprotect(masked: &str, spans: &[ProtectionSpan]) -> String {
    let mut out = masked.to_owned();
    for span in spans {
        out = out.replacen(&span.placeholder_token, &span.original, 1);
    }
    out
}

/// Slice the original text covered by a span.
pub fn span_text<'a>(text: &'a str, span: &ProtectionSpan) -> &'a str {
    &text[char_to_byte(text, span.start)..char_to_byte(text, span.end)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_forms_masked_and_restored() {
        let text = "She has a Ph.D. from U.S. schools";
        let (masked, spans) = protect(text);
        assert_eq!(spans.len(), 2);
        assert!(!masked.contains("Ph.D."));
        assert!(!masked.contains("U.S."));
        assert_eq!(span_text(text, &spans[0]), "Ph.D.");
        assert_eq!(span_text(text, &spans[1]), "U.S.");
        assert_eq!(unprotect(&masked, &spans), text);
    }

    #[test]
    fn no_match_is_identity() {
        let (masked, spans) = protect("no acronyms here");
        assert_eq!(masked, "no acronyms here");
        assert!(spans.is_empty());
    }

    #[test]
    fn url_trailing_punctuation_left_out() {
        let text = "see https://example.com/dont.";
        let (_, spans) = protect(text);
        assert_eq!(spans[0].kind, ProtectionKind::Url);
        assert_eq!(span_text(text, &spans[0]), "https://example.com/dont");
    }

    #[test]
    fn honorific_masked() {
        let (_, spans) = protect("Dr. Smith said so");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, ProtectionKind::Honorific);
    }

    #[test]
    fn placeholder_never_collides_with_input() {
        let text = "\u{E000}A0\u{E000} and U.S. too";
        let (masked, spans) = protect(text);
        assert_eq!(unprotect(&masked, &spans), text);
    }
}
