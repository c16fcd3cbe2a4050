use unicode_segmentation::UnicodeSegmentation;

pub const TOKENIZER_ID: &str = "unicode-words-lowercase-v1";

/// A lowercased word with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub term: String,
    pub start: usize,
    pub end: usize,
}

/// Unicode word segmentation, lowercased; no stemming or stopwords.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.unicode_word_indices()
        .map(|(start, w)| Token {
            term: w.to_lowercase(),
            start,
            end: start + w.len(),
        })
        .collect()
}

pub fn terms(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}
