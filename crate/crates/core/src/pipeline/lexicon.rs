use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::text::word_spans;

const DEFAULT_LEXICON: &str = include_str!("../../data/pronoun_lexicon.toml");

#[derive(Debug, Deserialize)]
struct LexiconFile {
    version: String,
    in_scope: Vec<String>,
    deictic: Vec<String>,
    #[serde(default)]
    possessive: Vec<String>,
    #[serde(default)]
    expletive: Vec<String>,
}

/// Closed pronoun lexicon plus expletive-`it` patterns.
#[derive(Debug, Clone)]
pub struct PronounLexicon {
    pub version: String,
    pub in_scope_forms: BTreeSet<String>,
    pub deictic_forms: BTreeSet<String>,
    pub possessive_forms: BTreeSet<String>,
    expletive_rules: Vec<Regex>,
}

impl Default for PronounLexicon {
    fn default() -> Self {
        Self::builtin().clone()
    }
}

impl PronounLexicon {
    pub fn from_toml(source: &str) -> Result<Self> {
        let file: LexiconFile = toml::from_str(source)
            .map_err(|e| Error::Config(format!("invalid pronoun lexicon: {e}")))?;
        let lower = |v: Vec<String>| -> BTreeSet<String> {
            v.into_iter().map(|w| w.to_lowercase()).collect()
        };
        let in_scope_forms = lower(file.in_scope);
        let deictic_forms = lower(file.deictic);
        if let Some(w) = in_scope_forms.intersection(&deictic_forms).next() {
            return Err(Error::Config(format!(
                "`{w}` is listed as both in-scope and deictic"
            )));
        }
        let possessive_forms = lower(file.possessive);
        let expletive_rules = file
            .expletive
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|e| Error::Config(format!("bad expletive pattern: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PronounLexicon {
            version: file.version,
            in_scope_forms,
            deictic_forms,
            possessive_forms,
            expletive_rules,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn builtin() -> &'static PronounLexicon {
        static LEX: OnceLock<PronounLexicon> = OnceLock::new();
        LEX.get_or_init(|| PronounLexicon::from_toml(DEFAULT_LEXICON).expect("builtin lexicon"))
    }

    pub fn is_pronoun(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.in_scope_forms.contains(&w) || self.deictic_forms.contains(&w)
    }

    /// True when any word of `text` (case-folded, word-boundary delimited)
    /// is in the lexicon.
    pub fn contains_pronoun(&self, text: &str) -> bool {
        word_spans(text)
            .into_iter()
            .any(|(s, e)| self.is_pronoun(&text[s..e]))
    }

    /// Does an expletive pattern match the text starting at an `it` token?
    pub fn is_expletive_at(&self, tail: &str) -> bool {
        self.expletive_rules.iter().any(|re| re.is_match(tail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sets_are_disjoint() {
        let lex = PronounLexicon::builtin();
        assert!(lex.in_scope_forms.is_disjoint(&lex.deictic_forms));
        assert!(!lex.in_scope_forms.contains("i"));
        assert!(!lex.in_scope_forms.contains("we"));
    }

    #[test]
    fn overlap_rejected() {
        let src = "version='x'\nin_scope=['it']\ndeictic=['it']\n";
        assert!(PronounLexicon::from_toml(src).is_err());
    }

    #[test]
    fn expletive_examples() {
        let lex = PronounLexicon::builtin();
        for s in [
            "It is raining.",
            "It seems that she left.",
            "It was John who called.",
            "It is important to exercise.",
        ] {
            assert!(lex.is_expletive_at(s), "{s}");
        }
        for s in [
            "It premiered on AMC.",
            "it at first!",
            "It is a great song.",
        ] {
            assert!(!lex.is_expletive_at(s), "{s}");
        }
    }
}
