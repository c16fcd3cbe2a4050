use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub window: usize,
    pub stride: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            window: 100,
            stride: 50,
        }
    }
}

impl ChunkParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return Err(Error::Config(format!(
                "need 0 < stride <= window, got window {} stride {}",
                self.window, self.stride
            )));
        }
        Ok(())
    }
}

/// A window of tokens from one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: u32,
    pub doc_id: String,
    pub token_offset: usize,
    #[serde(skip)]
    pub tokens: Vec<String>,
    pub token_count: usize,
    /// Source substring from the first to the last token of the window.
    pub text: String,
}

/// Number of windows for an `n`-token document.
pub fn chunk_count(n: usize, params: ChunkParams) -> usize {
    if n == 0 {
        0
    } else if n <= params.window {
        1
    } else {
        (n - params.window).div_ceil(params.stride) + 1
    }
}

/// `(start, end)` token ranges of every window.
pub fn window_ranges(n: usize, params: ChunkParams) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut start = 0;
    loop {
        let end = (start + params.window).min(n);
        out.push((start, end));
        if end == n {
            break;
        }
        start += params.stride;
    }
    out
}

/// Split a document into passages. Passage ids are left at 0; the index
/// assigns them.
pub fn chunk_document(doc_id: &str, text: &str, params: ChunkParams) -> Vec<Passage> {
    let tokens: Vec<Token> = tokenize(text);
    window_ranges(tokens.len(), params)
        .into_iter()
        .map(|(s, e)| Passage {
            passage_id: 0,
            doc_id: doc_id.to_owned(),
            token_offset: s,
            tokens: tokens[s..e].iter().map(|t| t.term.clone()).collect(),
            token_count: e - s,
            text: text[tokens[s].start..tokens[e - 1].end].to_owned(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(n: usize) -> String {
        (0..n)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn hand_enumerated_cases() {
        let p = ChunkParams::default();
        let c = chunk_document("d", &doc(150), p);
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].token_offset, c[0].token_count), (0, 100));
        assert_eq!((c[1].token_offset, c[1].token_count), (50, 100));
        assert_eq!(chunk_document("d", &doc(100), p).len(), 1);
        let c = chunk_document("d", &doc(101), p);
        assert_eq!(c.len(), 2);
        assert_eq!((c[1].token_offset, c[1].token_count), (50, 51));
        assert!(chunk_document("d", "", p).is_empty());
    }

    #[test]
    fn text_covers_tokens() {
        let c = chunk_document(
            "d",
            "  Hello, world. Bye  ",
            ChunkParams {
                window: 2,
                stride: 1,
            },
        );
        assert_eq!(c[0].text, "Hello, world");
        assert_eq!(c[1].text, "world. Bye");
    }

    #[test]
    fn bad_params() {
        assert!(ChunkParams {
            window: 10,
            stride: 11
        }
        .validate()
        .is_err());
        assert!(ChunkParams {
            window: 0,
            stride: 0
        }
        .validate()
        .is_err());
    }
}
