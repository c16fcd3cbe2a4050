//! Small text helpers shared across stages.

/// Byte spans of maximal alphanumeric runs. Apostrophes and all other
/// punctuation delimit words, so `he's` yields `he` and `s`.
pub fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            spans.push((s, i));
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Convert a character offset into a byte offset. Offsets past the end clamp
/// to `text.len()`.
pub fn char_to_byte(text: &str, char_idx: usize) -> usize {
    text.char_indices()
        .nth(char_idx)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

pub fn byte_to_char(text: &str, byte_idx: usize) -> usize {
    text[..byte_idx].chars().count()
}

pub fn ends_with_terminal(text: &str) -> bool {
    let trimmed = text
        .trim_end()
        .trim_end_matches(['"', '\'', ')', ']', '”', '’']);
    trimmed.ends_with(['.', '?', '!', '…'])
}

/// Collapse whitespace runs to one space and case-fold.
pub fn normalize_for_match(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Uppercase the first character of `s`.
pub fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// True when the byte position starts a sentence: only whitespace or opening
/// quotes separate it from the text start or a terminal mark.
pub fn is_sentence_initial(text: &str, byte_pos: usize) -> bool {
    let before = &text[..byte_pos];
    for (i, ch) in before.char_indices().rev() {
        if ch.is_whitespace() || matches!(ch, '"' | '“' | '(' | '\'' | '‘') {
            continue;
        }
        if ch == '.' {
            return !is_abbreviation(&before[..i]);
        }
        return matches!(ch, '?' | '!' | '…');
    }
    true
}

const HONORIFICS: &[&str] = &["mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs"];

/// Whether the word ending at the end of `text` (a period follows it) is a
/// dotted acronym such as `C.K` or `U.S`, a lone initial, or an honorific.
fn is_abbreviation(text: &str) -> bool {
    let word = text
        .rsplit(|c: char| c.is_whitespace())
        .next()
        .unwrap_or("");
    if word.is_empty() {
        return false;
    }
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
    word.contains('.')
        || (letters.len() == 1 && word.chars().count() == 1 && letters[0].is_uppercase())
        || HONORIFICS.contains(&word.to_lowercase().as_str())
}

/// Join turns with single spaces, skipping blank ones.
pub fn join_turns<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Stable 64-bit FNV-1a; used where a hash must not change across builds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hex-encoded SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_split_on_apostrophe() {
        let t = "he's fine, ok";
        let words: Vec<&str> = word_spans(t).iter().map(|&(s, e)| &t[s..e]).collect();
        assert_eq!(words, ["he", "s", "fine", "ok"]);
    }

    #[test]
    fn sentence_initial() {
        let t = "Hi. \"He went";
        assert!(is_sentence_initial(t, 0));
        assert!(is_sentence_initial(t, 5));
        assert!(!is_sentence_initial(t, 8));
        let t = "I heard Louis C.K. performed there. Dr. Who";
        assert!(!is_sentence_initial(t, 19));
        assert!(is_sentence_initial(t, 36));
        assert!(!is_sentence_initial(t, 40));
    }

    #[test]
    fn terminal_detection() {
        assert!(ends_with_terminal("done."));
        assert!(ends_with_terminal("really?\""));
        assert!(!ends_with_terminal("where is he from"));
    }

    #[test]
    fn char_byte_roundtrip() {
        let t = "héllo wörld";
        for i in 0..=t.chars().count() {
            assert_eq!(byte_to_char(t, char_to_byte(t, i)), i);
        }
    }
}
