//! Deterministic offline backend.
//!
//! Every answer is a pure function of the inputs (plus the optional script
//! and proper-noun list), so the same request always gets bit-identical
//! output. Pinned conventions:
//!
//! * NLI on an identical pair returns logits `(10, 0, -10)`.
//! * NLI on a pair with no shared word returns `(-10, 0, 10)`.
//! * Otherwise logits depend on hypothesis word coverage, a negation
//!   mismatch cue and a small hash-seeded jitter.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Backend, BackendDescriptor, BackendError, BackendResult, Capability, CorefProposal, Embedding,
    NliLogits, MAX_COREF_CANDIDATES,
};
use crate::error::{Error, Result};
use crate::normalize::{decontract_claim, RuleTable};
use crate::text::{byte_to_char, capitalize_first, ends_with_terminal, fnv1a, word_spans};

const EMBED_DIM: usize = 64;

const QUESTION_OPENERS: &[&str] = &[
    "who", "what", "where", "when", "why", "how", "which", "whose", "is", "are", "was", "were",
    "do", "does", "did", "can", "could", "will", "would", "should", "have", "has", "had", "am",
];

const STUB_PRONOUNS: &[&str] = &[
    "he", "she", "him", "her", "his", "hers", "they", "them", "their", "theirs", "it", "its",
];

const NEGATIONS: &[&str] = &[
    "not", "no", "never", "nobody", "nothing", "none", "cannot", "t",
];

const NON_ANTECEDENTS: &[&str] = &[
    "i", "the", "a", "an", "it", "he", "she", "they", "we", "you", "this", "that", "what", "where",
    "when", "who", "why", "how", "yes", "no", "oh", "well", "so", "and", "but", "do", "did", "is",
    "are", "was", "have", "my", "me", "wow", "thanks", "ok", "okay", "hi", "hello",
];

/// Scripted coreference answer for one claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptMention {
    /// Surface form of the pronoun, matched as a whole word, case-sensitive.
    pub mention: String,
    /// Which occurrence of `mention` (0-based).
    #[serde(default)]
    pub occurrence: usize,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub select: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Claim text as seen by the proposer (the true-cased surface).
    pub claim: String,
    #[serde(default)]
    pub mentions: Vec<ScriptMention>,
    /// Fixed decoder rewrite for this claim (keyed on the original claim).
    #[serde(default)]
    pub rewrite: Option<String>,
}

/// Scripted answers that override the stub heuristics, keyed by claim.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubScript {
    /// Extra lowercase words for the true-caser gazetteer.
    #[serde(default)]
    pub proper_nouns: Vec<String>,
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
}

impl StubScript {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid stub script {}: {e}", path.display())))
    }

    /// First entry for `claim` that scripts coreference.
    fn mentions_for(&self, claim: &str) -> Option<&ScriptEntry> {
        self.entries
            .iter()
            .find(|e| e.claim == claim && !e.mentions.is_empty())
    }

    fn rewrite_for(&self, claim: &str) -> Option<&str> {
        self.entries
            .iter()
            .filter(|e| e.claim == claim)
            .find_map(|e| e.rewrite.as_deref())
    }
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    descriptor: BackendDescriptor,
    proper_nouns: HashSet<String>,
    script: StubScript,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self::new()
    }
}

fn words_lower(text: &str) -> Vec<String> {
    word_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].to_lowercase())
        .collect()
}

/// Deterministic value in `[-1, 1]` derived from the inputs.
fn jitter(salt: &str, parts: &[&str]) -> f64 {
    let mut bytes = salt.as_bytes().to_vec();
    for p in parts {
        bytes.push(0x1f);
        bytes.extend_from_slice(p.as_bytes());
    }
    let h = fnv1a(&bytes);
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn default_proper_nouns() -> HashSet<String> {
    [
        "january",
        "february",
        "march",
        "april",
        "june",
        "july",
        "august",
        "september",
        "october",
        "november",
        "december",
        "monday",
        "tuesday",
        "wednesday",
        "thursday",
        "friday",
        "saturday",
        "sunday",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl StubBackend {
    pub fn new() -> Self {
        let models: BTreeMap<Capability, String> = Capability::ALL
            .iter()
            .map(|c| (*c, format!("stub/{}-v1", c.as_str())))
            .collect();
        StubBackend {
            descriptor: BackendDescriptor {
                endpoint: "stub".into(),
                models,
            },
            proper_nouns: default_proper_nouns(),
            script: StubScript::default(),
        }
    }

    /// Extra lowercase words the stub true-caser capitalises.
    pub fn with_proper_nouns<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.proper_nouns
            .extend(words.into_iter().map(|w| w.as_ref().to_lowercase()));
        self
    }

    /// Install scripted answers; the script's proper nouns join the
    /// gazetteer.
    pub fn with_script(self, script: StubScript) -> Self {
        let mut this = self.with_proper_nouns(script.proper_nouns.clone());
        this.script = script;
        this
    }

    /// Restrict the advertised capabilities.
    pub fn with_capabilities(mut self, caps: &[Capability]) -> Self {
        self.descriptor.models.retain(|c, _| caps.contains(c));
        self
    }

    fn scripted_proposals(&self, entry: &ScriptEntry) -> Vec<(CorefProposal, usize)> {
        let claim = &entry.claim;
        let spans = word_spans(claim);
        entry
            .mentions
            .iter()
            .filter_map(|m| {
                let (s, e) = spans
                    .iter()
                    .filter(|&&(s, e)| claim[s..e] == *m.mention)
                    .nth(m.occurrence)?;
                Some((
                    CorefProposal {
                        pronoun_span: (byte_to_char(claim, *s), byte_to_char(claim, *e)),
                        candidates: m
                            .candidates
                            .iter()
                            .take(MAX_COREF_CANDIDATES)
                            .cloned()
                            .collect(),
                    },
                    m.select,
                ))
            })
            .collect()
    }

    /// Capitalised word runs in the context, most recent first.
    fn heuristic_candidates(context: &[String]) -> Vec<String> {
        let mut found: Vec<String> = Vec::new();
        for turn in context.iter().rev() {
            let spans = word_spans(turn);
            let mut runs: Vec<String> = Vec::new();
            let mut i = 0;
            while i < spans.len() {
                let is_cap = |k: usize| {
                    let w = &turn[spans[k].0..spans[k].1];
                    w.chars().next().is_some_and(char::is_uppercase)
                        && !NON_ANTECEDENTS.contains(&w.to_lowercase().as_str())
                };
                if is_cap(i) {
                    let start = spans[i].0;
                    let mut j = i;
                    // Initials such as "C.K." may be joined by dots.
                    let joinable = |k: usize| {
                        let gap = &turn[spans[k].1..spans[k + 1].0];
                        let initial = spans[k].1 - spans[k].0 == 1;
                        gap.trim().is_empty() || (initial && gap.trim() == ".")
                    };
                    while j + 1 < spans.len() && is_cap(j + 1) && joinable(j) {
                        j += 1;
                    }
                    let mut end = spans[j].1;
                    if spans[j].1 - spans[j].0 == 1 && turn[end..].starts_with('.') {
                        end += 1;
                    }
                    runs.push(turn[start..end].to_owned());
                    i = j + 1;
                } else {
                    i += 1;
                }
            }
            for run in runs.into_iter().rev() {
                if !found.contains(&run) {
                    found.push(run);
                }
            }
        }
        found.truncate(MAX_COREF_CANDIDATES);
        found
    }
}

impl Backend for StubBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn nli_logits(&self, premise: &str, hypothesis: &str) -> BackendResult<NliLogits> {
        if premise == hypothesis {
            return Ok(NliLogits::new(10.0, 0.0, -10.0));
        }
        let p: HashSet<String> = words_lower(premise).into_iter().collect();
        let h: HashSet<String> = words_lower(hypothesis).into_iter().collect();
        if p.is_disjoint(&h) {
            return Ok(NliLogits::new(-10.0, 0.0, 10.0));
        }
        let coverage = h.intersection(&p).count() as f64 / h.len() as f64;
        let neg = |s: &HashSet<String>| NEGATIONS.iter().any(|n| s.contains(*n));
        let mismatch = if neg(&p) != neg(&h) { 1.0 } else { 0.0 };
        let noise = jitter("nli", &[premise, hypothesis]);
        let ent = 8.0 * coverage - 4.0 + noise - 4.0 * mismatch;
        let ctr = 2.0 - 6.0 * coverage + 5.0 * mismatch - 0.5 * noise;
        let neu = 1.0 + 0.5 * jitter("nli-neutral", &[premise, hypothesis]);
        Ok(NliLogits::new(ent, neu, ctr))
    }

    fn embed(&self, text: &str) -> BackendResult<Embedding> {
        let mut v = vec![0.0; EMBED_DIM];
        for w in words_lower(text) {
            let h = fnv1a(w.as_bytes());
            let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
            v[((h >> 1) % EMBED_DIM as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Embedding(v))
    }

    fn punctuate(&self, turn: &str) -> BackendResult<String> {
        if turn.trim().is_empty() || ends_with_terminal(turn) {
            return Ok(turn.to_owned());
        }
        let first = words_lower(turn).into_iter().next().unwrap_or_default();
        if QUESTION_OPENERS.contains(&first.as_str()) {
            let body = turn.trim_end();
            Ok(format!("{body}?{}", &turn[body.len()..]))
        } else {
            Ok(turn.to_owned())
        }
    }

    fn truecase(&self, turn: &str) -> BackendResult<String> {
        let mut out = turn.to_owned();
        for (s, e) in word_spans(turn) {
            let word = &turn[s..e];
            let lower = word.to_lowercase();
            let sentence_start = crate::text::is_sentence_initial(turn, s);
            if sentence_start || lower == "i" || self.proper_nouns.contains(&lower) {
                let first_len = word.chars().next().map_or(0, char::len_utf8);
                let upper: String = word[..first_len].to_uppercase();
                if upper.chars().count() == 1 {
                    out.replace_range(s..s + first_len, &upper);
                }
            }
        }
        Ok(out)
    }

    fn coref_propose(&self, context: &[String], claim: &str) -> BackendResult<Vec<CorefProposal>> {
        if let Some(entry) = self.script.mentions_for(claim) {
            return Ok(self
                .scripted_proposals(entry)
                .into_iter()
                .map(|(p, _)| p)
                .collect());
        }
        let candidates = Self::heuristic_candidates(context);
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        Ok(word_spans(claim)
            .into_iter()
            .filter(|&(s, e)| STUB_PRONOUNS.contains(&claim[s..e].to_lowercase().as_str()))
            .map(|(s, e)| CorefProposal {
                pronoun_span: (byte_to_char(claim, s), byte_to_char(claim, e)),
                candidates: candidates.clone(),
            })
            .collect())
    }

    fn antecedent_select(
        &self,
        _context: &[String],
        claim: &str,
        proposal: &CorefProposal,
    ) -> BackendResult<usize> {
        if let Some(entry) = self.script.mentions_for(claim) {
            if let Some((_, idx)) = self
                .scripted_proposals(entry)
                .into_iter()
                .find(|(p, _)| p.pronoun_span == proposal.pronoun_span)
            {
                return Ok(idx);
            }
        }
        Ok(0)
    }

    fn decoder_rewrite(&self, _context: &[String], claim: &str) -> BackendResult<String> {
        if let Some(rewrite) = self.script.rewrite_for(claim) {
            return Ok(rewrite.to_string());
        }
        let mut out =
            capitalize_first(decontract_claim(claim.trim(), RuleTable::builtin()).as_str());
        if !ends_with_terminal(&out) {
            out.push('.');
        }
        Ok(out)
    }

    fn cross_encode(&self, query: &str, passage: &str) -> BackendResult<f64> {
        if passage.trim().is_empty() {
            return Err(BackendError::InvalidInput("empty passage".into()));
        }
        let q: HashSet<String> = words_lower(query).into_iter().collect();
        let p = words_lower(passage);
        let hits = p.iter().filter(|w| q.contains(*w)).count() as f64;
        let score = hits / ((p.len() as f64) + 1.0).sqrt() + 1e-6 * jitter("ce", &[query, passage]);
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_disjoint_pins() {
        let b = StubBackend::new();
        assert_eq!(
            b.nli_logits("a b", "a b").unwrap(),
            NliLogits::new(10.0, 0.0, -10.0)
        );
        assert_eq!(
            b.nli_logits("a b", "c d").unwrap(),
            NliLogits::new(-10.0, 0.0, 10.0)
        );
    }

    #[test]
    fn nli_is_deterministic() {
        let b = StubBackend::new();
        let x = b
            .nli_logits("Elvis was born in Tupelo.", "He was born in Tupelo.")
            .unwrap();
        let y = b
            .nli_logits("Elvis was born in Tupelo.", "He was born in Tupelo.")
            .unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn punctuate_question() {
        let b = StubBackend::new();
        assert_eq!(
            b.punctuate("where is he from").unwrap(),
            "where is he from?"
        );
        assert_eq!(b.punctuate("he is from here").unwrap(), "he is from here");
    }

    #[test]
    fn truecase_gazetteer() {
        let b = StubBackend::new().with_proper_nouns(["elvis", "tupelo"]);
        assert_eq!(
            b.truecase("elvis was born in tupelo").unwrap(),
            "Elvis was born in Tupelo"
        );
    }

    #[test]
    fn heuristic_candidates_most_recent_first() {
        let ctx = vec![
            "I heard Louis C.K. performed there.".to_string(),
            "Have you been to Madison Square Garden?".to_string(),
        ];
        let c = StubBackend::heuristic_candidates(&ctx);
        assert_eq!(c[0], "Madison Square Garden");
        assert!(c.contains(&"Louis C.K.".to_string()));
    }

    #[test]
    fn embed_is_unit_norm() {
        let e = StubBackend::new().embed("hello world").unwrap();
        let n: f64 = e.0.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(e.dim(), EMBED_DIM);
    }
}
