use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffOp};

use super::scope::{classify_pronouns, ScopedMention};
use super::PronounLexicon;
use crate::backends::{guards, Backend, Capability, CorefProposal};
use crate::data::DialogueInstance;
use crate::error::BackendError;
use crate::normalize::{decontract_claim, RuleTable};
use crate::text::{capitalize_first, char_to_byte, ends_with_terminal, is_sentence_initial};

/// Claim surface identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    R0,
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::R0,
        Stage::R1,
        Stage::R2,
        Stage::R3,
        Stage::R4,
        Stage::R5,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The surface this stage is derived from.
    pub fn predecessor(self) -> Option<Stage> {
        match self {
            Stage::R0 => None,
            Stage::R1 => Some(Stage::R0),
            Stage::R2 => Some(Stage::R1),
            Stage::R3 => Some(Stage::R2),
            Stage::R4 => Some(Stage::R3),
            Stage::R5 => Some(Stage::R0),
        }
    }

    pub fn as_str(self) -> &'static str {
        ["r0", "r1", "r2", "r3", "r4", "r5"][self.index()]
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown surface `{s}`"))
    }
}

/// One replacement applied by a stage. `span` is in characters of the
/// predecessor surface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub stage: Stage,
    pub span: (usize, usize),
    pub before: String,
    pub after: String,
}

/// Apply non-overlapping edits (in any order) to `base`.
pub fn replay_edits<'a>(base: &str, edits: impl IntoIterator<Item = &'a Edit>) -> String {
    let mut edits: Vec<&Edit> = edits.into_iter().collect();
    edits.sort_by_key(|e| e.span.0);
    let mut out = String::with_capacity(base.len());
    let mut cursor = 0;
    for e in edits {
        let s = char_to_byte(base, e.span.0);
        let t = char_to_byte(base, e.span.1);
        out.push_str(&base[cursor..s]);
        out.push_str(&e.after);
        cursor = t;
    }
    out.push_str(&base[cursor..]);
    out
}

/// Words, whitespace runs and single punctuation characters.
fn diff_tokens(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start = 0;
    let mut kind: Option<u8> = None;
    for (i, ch) in text.char_indices() {
        let k = if ch.is_alphanumeric() {
            0
        } else if ch.is_whitespace() {
            1
        } else {
            2
        };
        if kind.is_some() && (kind != Some(k) || k == 2) {
            tokens.push(&text[start..i]);
            start = i;
        }
        kind = Some(k);
    }
    if start < text.len() {
        tokens.push(&text[start..]);
    }
    tokens
}

/// Token-level diff of two surfaces, expressed as replay-able edits.
pub fn diff_edits(stage: Stage, before: &str, after: &str) -> Vec<Edit> {
    if before == after {
        return Vec::new();
    }
    let old = diff_tokens(before);
    let new = diff_tokens(after);
    let char_offsets = |toks: &[&str]| {
        let mut v = Vec::with_capacity(toks.len() + 1);
        let mut acc = 0;
        v.push(0);
        for t in toks {
            acc += t.chars().count();
            v.push(acc);
        }
        v
    };
    let old_off = char_offsets(&old);

    let mut edits = Vec::new();
    let mut pending: Option<(usize, usize, usize, usize)> = None;
    let flush = |p: (usize, usize, usize, usize), edits: &mut Vec<Edit>| {
        let (os, oe, ns, ne) = p;
        edits.push(Edit {
            stage,
            span: (old_off[os], old_off[oe]),
            before: old[os..oe].concat(),
            after: new[ns..ne].concat(),
        });
    };
    let (mut op_old, mut op_new) = (0, 0);
    for op in capture_diff_slices(Algorithm::Myers, &old, &new) {
        let (ol, nl) = match op {
            DiffOp::Equal { len, .. } => {
                if let Some(p) = pending.take() {
                    flush(p, &mut edits);
                }
                op_old += len;
                op_new += len;
                continue;
            }
            DiffOp::Delete { old_len, .. } => (old_len, 0),
            DiffOp::Insert { new_len, .. } => (0, new_len),
            DiffOp::Replace {
                old_len, new_len, ..
            } => (old_len, new_len),
        };
        pending = Some(match pending {
            Some((os, _, ns, _)) => (os, op_old + ol, ns, op_new + nl),
            None => (op_old, op_old + ol, op_new, op_new + nl),
        });
        op_old += ol;
        op_new += nl;
    }
    if let Some(p) = pending {
        flush(p, &mut edits);
    }
    edits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub punctuate: bool,
    pub truecase: bool,
    pub coref: bool,
    pub decoder: bool,
    /// Possessive pronouns become `antecedent + "'s"`.
    pub possessive_rule: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            punctuate: true,
            truecase: true,
            coref: true,
            decoder: true,
            possessive_rule: true,
        }
    }
}

impl PipelineConfig {
    pub fn required_capabilities(&self) -> Vec<Capability> {
        let mut caps = Vec::new();
        if self.punctuate {
            caps.push(Capability::Punctuate);
        }
        if self.truecase {
            caps.push(Capability::Truecase);
        }
        if self.coref {
            caps.extend([Capability::CorefPropose, Capability::AntecedentSelect]);
        }
        if self.decoder {
            caps.push(Capability::DecoderRewrite);
        }
        caps
    }
}

/// The R0..R5 family of one instance with per-stage provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimSurfaces {
    pub instance_id: String,
    pub r0: String,
    pub r1: String,
    pub r2: String,
    pub r3: String,
    pub r4: String,
    pub r5: String,
    pub edits: Vec<Edit>,
    pub r4_candidate_present: bool,
    /// Stages whose backend failed; they inherit their predecessor.
    #[serde(default)]
    pub unavailable: Vec<Stage>,
    #[serde(default)]
    pub mentions: Vec<ScopedMention>,
    /// Contract violations and fallbacks, in order of occurrence.
    #[serde(default)]
    pub log: Vec<String>,
}

impl ClaimSurfaces {
    pub fn get(&self, stage: Stage) -> &str {
        match stage {
            Stage::R0 => &self.r0,
            Stage::R1 => &self.r1,
            Stage::R2 => &self.r2,
            Stage::R3 => &self.r3,
            Stage::R4 => &self.r4,
            Stage::R5 => &self.r5,
        }
    }

    pub fn edits_for(&self, stage: Stage) -> impl Iterator<Item = &Edit> {
        self.edits.iter().filter(move |e| e.stage == stage)
    }

    pub fn is_available(&self, stage: Stage) -> bool {
        !self.unavailable.contains(&stage)
    }
}

const OBJECT_FOLLOWERS: &[&str] = &[
    "to", "and", "or", "but", "in", "on", "at", "with", "for", "from", "about", "that", "a", "an",
    "the", "up", "out", "off", "back", "again", "too", "so", "as", "because", "when", "if", "this",
    "is", "was", "by", "into", "over", "after", "before", "yet", "very", "more",
];

fn is_possessive(claim: &str, mention: &ScopedMention, lexicon: &PronounLexicon) -> bool {
    let lower = mention.form.to_lowercase();
    if lexicon.possessive_forms.contains(&lower) {
        return true;
    }
    if lower != "her" {
        return false;
    }
    let end = char_to_byte(claim, mention.span.1);
    let rest = &claim[end..];
    if !rest.starts_with(' ') {
        return false;
    }
    let next: String = rest
        .trim_start()
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect();
    !next.is_empty() && !OBJECT_FOLLOWERS.contains(&next.to_lowercase().as_str())
}

struct StageOutcome {
    text: String,
    unavailable: bool,
}

fn guarded_stage<F, G>(
    backend_call: F,
    guard: G,
    input: &str,
    stage: Stage,
    log: &mut Vec<String>,
) -> StageOutcome
where
    F: FnOnce(&str) -> Result<String, BackendError>,
    G: FnOnce(&str, &str) -> Result<(), String>,
{
    match backend_call(input) {
        Ok(out) => match guard(input, &out) {
            Ok(()) => StageOutcome {
                text: out,
                unavailable: false,
            },
            Err(why) => {
                log.push(format!("{stage}: contract violation, stage skipped: {why}"));
                StageOutcome {
                    text: input.to_owned(),
                    unavailable: false,
                }
            }
        },
        Err(e) => {
            log.push(format!("{stage}: backend error, surface unavailable: {e}"));
            StageOutcome {
                text: input.to_owned(),
                unavailable: true,
            }
        }
    }
}

fn append_period(text: &str) -> String {
    if text.trim().is_empty() || ends_with_terminal(text) {
        return text.to_owned();
    }
    let body = text.trim_end();
    format!("{body}.{}", &text[body.len()..])
}

/// Everything `build_surfaces` needs besides the instance.
pub struct SurfaceBuilder<'a> {
    pub backend: &'a dyn Backend,
    pub lexicon: &'a PronounLexicon,
    pub rules: &'a RuleTable,
    pub config: PipelineConfig,
}

impl<'a> SurfaceBuilder<'a> {
    pub fn new(backend: &'a dyn Backend, config: PipelineConfig) -> Self {
        SurfaceBuilder {
            backend,
            lexicon: PronounLexicon::builtin(),
            rules: RuleTable::builtin(),
            config,
        }
    }

    pub fn check_capabilities(&self) -> Result<(), BackendError> {
        self.backend
            .descriptor()
            .require(&self.config.required_capabilities())
    }

    fn punctuate(&self, text: &str, stage: Stage, log: &mut Vec<String>) -> StageOutcome {
        if !self.config.punctuate {
            return StageOutcome {
                text: text.to_owned(),
                unavailable: false,
            };
        }
        let mut out = guarded_stage(
            |t| self.backend.punctuate(t),
            guards::check_punctuation,
            text,
            stage,
            log,
        );
        if !out.unavailable {
            out.text = append_period(&out.text);
        }
        out
    }

    fn truecase(&self, text: &str, stage: Stage, log: &mut Vec<String>) -> StageOutcome {
        if !self.config.truecase {
            return StageOutcome {
                text: text.to_owned(),
                unavailable: false,
            };
        }
        guarded_stage(
            |t| self.backend.truecase(t),
            guards::check_truecase,
            text,
            stage,
            log,
        )
    }

    /// Context turns taken through R1..R3, used for antecedent proposal.
    fn normalized_context(&self, turns: &[String]) -> Vec<String> {
        let mut scratch = Vec::new();
        turns
            .iter()
            .map(|t| {
                let r1 = decontract_claim(t, self.rules);
                let r2 = self.punctuate(&r1, Stage::R2, &mut scratch).text;
                self.truecase(&r2, Stage::R3, &mut scratch).text
            })
            .collect()
    }

    /// Scoped antecedent substitution on R3. Returns the edits (spans in R3).
    fn substitute(
        &self,
        context: &[String],
        r3: &str,
        mentions: &[ScopedMention],
        log: &mut Vec<String>,
    ) -> Result<Vec<Edit>, BackendError> {
        let eligible: Vec<&ScopedMention> = mentions.iter().filter(|m| m.eligible()).collect();
        if eligible.is_empty() {
            return Ok(Vec::new());
        }
        let proposals = self.backend.coref_propose(context, r3)?;
        let mut edits = Vec::new();
        for mention in eligible {
            let Some(proposal) = proposals
                .iter()
                .find(|p| p.pronoun_span == mention.span)
                .filter(|p| !p.candidates.is_empty())
            else {
                continue;
            };
            let proposal = CorefProposal {
                pronoun_span: proposal.pronoun_span,
                candidates: proposal
                    .candidates
                    .iter()
                    .take(crate::backends::MAX_COREF_CANDIDATES)
                    .cloned()
                    .collect(),
            };
            let idx = self.backend.antecedent_select(context, r3, &proposal)?;
            if let Err(why) = guards::check_selection(&proposal, idx) {
                log.push(format!(
                    "r4: mention `{}` at {:?} left unsubstituted: {why}",
                    mention.form, mention.span
                ));
                continue;
            }
            let antecedent = proposal.candidates[idx].trim();
            if antecedent.is_empty() {
                continue;
            }
            let mut replacement = antecedent.to_owned();
            if self.config.possessive_rule
                && is_possessive(r3, mention, self.lexicon)
                && !replacement.ends_with("'s")
                && !replacement.ends_with("’s")
            {
                replacement.push_str("'s");
            }
            if is_sentence_initial(r3, char_to_byte(r3, mention.span.0)) {
                replacement = capitalize_first(&replacement);
            }
            edits.push(Edit {
                stage: Stage::R4,
                span: mention.span,
                before: mention.form.clone(),
                after: replacement,
            });
        }
        Ok(edits)
    }

    /// Build R0..R5 for one instance.
    pub fn build(&self, instance: &DialogueInstance) -> ClaimSurfaces {
        let mut log = Vec::new();
        let mut unavailable = Vec::new();
        let r0 = instance.response.clone();

        let r1 = decontract_claim(&r0, self.rules);

        let p = self.punctuate(&r1, Stage::R2, &mut log);
        if p.unavailable {
            unavailable.push(Stage::R2);
        }
        let r2 = p.text;

        let t = self.truecase(&r2, Stage::R3, &mut log);
        if t.unavailable {
            unavailable.push(Stage::R3);
        }
        let r3 = t.text;

        let mut edits = Vec::new();
        edits.extend(diff_edits(Stage::R1, &r0, &r1));
        edits.extend(diff_edits(Stage::R2, &r1, &r2));
        edits.extend(diff_edits(Stage::R3, &r2, &r3));

        let mentions = classify_pronouns(&instance.context_turns, &r3, self.lexicon);
        let mut r4 = r3.clone();
        let mut r4_candidate_present = false;
        if self.config.coref && mentions.iter().any(ScopedMention::eligible) {
            let context = self.normalized_context(&instance.context_turns);
            match self.substitute(&context, &r3, &mentions, &mut log) {
                Ok(subs) if !subs.is_empty() => {
                    r4 = replay_edits(&r3, &subs);
                    r4_candidate_present = r4 != r3;
                    edits.extend(subs);
                }
                Ok(_) => {}
                Err(e) => {
                    log.push(format!("r4: backend error, surface unavailable: {e}"));
                    unavailable.push(Stage::R4);
                }
            }
        }

        let r5 = if self.config.decoder {
            match self.backend.decoder_rewrite(&instance.context_turns, &r0) {
                Ok(text) => text,
                Err(e) => {
                    log.push(format!("r5: backend error, surface unavailable: {e}"));
                    unavailable.push(Stage::R5);
                    r0.clone()
                }
            }
        } else {
            r0.clone()
        };
        edits.extend(diff_edits(Stage::R5, &r0, &r5));

        ClaimSurfaces {
            instance_id: instance.instance_id.clone(),
            r0,
            r1,
            r2,
            r3,
            r4,
            r5,
            edits,
            r4_candidate_present,
            unavailable,
            mentions,
            log,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_roundtrip_simple() {
        let a = "it's cold and im sad";
        let b = "it is cold and I am sad";
        let edits = diff_edits(Stage::R1, a, b);
        assert_eq!(replay_edits(a, &edits), b);
        assert!(edits.iter().all(|e| e.stage == Stage::R1));
    }

    #[test]
    fn diff_identical_is_empty() {
        assert!(diff_edits(Stage::R2, "same", "same").is_empty());
    }

    #[test]
    fn period_appended_once() {
        assert_eq!(append_period("he left"), "he left.");
        assert_eq!(append_period("he left?"), "he left?");
        assert_eq!(append_period("he left "), "he left. ");
    }

    #[test]
    fn stage_parse() {
        assert_eq!("R4".parse::<Stage>().unwrap(), Stage::R4);
        assert!("r9".parse::<Stage>().is_err());
    }
}
