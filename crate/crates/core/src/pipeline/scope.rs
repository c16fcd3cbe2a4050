use serde::{Deserialize, Serialize};

use super::PronounLexicon;
use crate::text::{byte_to_char, word_spans};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeClass {
    AnaphoricInScope,
    Deictic,
    Expletive,
    NoAntecedent,
}

/// A lexicon match in the claim and its scope decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopedMention {
    /// Character offsets into the claim.
    pub span: (usize, usize),
    pub form: String,
    pub scope: ScopeClass,
}

impl ScopedMention {
    pub fn eligible(&self) -> bool {
        self.scope == ScopeClass::AnaphoricInScope
    }
}

/// Give every lexicon match in `claim` exactly one scope class.
///
/// Deictic forms are always out of scope, `it` is expletive when an
/// expletive pattern matches at its position, and any other in-scope form
/// is anaphoric only when the context has at least one non-blank turn.
pub fn classify_pronouns(
    context: &[String],
    claim: &str,
    lexicon: &PronounLexicon,
) -> Vec<ScopedMention> {
    let has_context = context.iter().any(|t| !t.trim().is_empty());
    word_spans(claim)
        .into_iter()
        .filter_map(|(s, e)| {
            let form = &claim[s..e];
            let lower = form.to_lowercase();
            let scope = if lexicon.deictic_forms.contains(&lower) {
                ScopeClass::Deictic
            } else if lexicon.in_scope_forms.contains(&lower) {
                if lower == "it" && lexicon.is_expletive_at(&claim[s..]) {
                    ScopeClass::Expletive
                } else if has_context {
                    ScopeClass::AnaphoricInScope
                } else {
                    ScopeClass::NoAntecedent
                }
            } else {
                return None;
            };
            Some(ScopedMention {
                span: (byte_to_char(claim, s), byte_to_char(claim, e)),
                form: form.to_owned(),
                scope,
            })
        })
        .collect()
}
