//! The narrow model interface consumed by the pipeline, the gate and the
//! retrieval cascade.
//!
//! Every neural component (NLI scorer, encoders, punctuation and casing
//! models, coreference proposer, antecedent selector, decoder rewriter,
//! cross-encoder) sits behind [`Backend`]. Two implementations ship:
//! [`StubBackend`], deterministic and offline, and [`HttpBackend`], a client
//! for the inference sidecar protocol described in `docs/protocol.md`.

mod counting;
pub mod guards;
mod http;
mod stub;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use crate::error::BackendError;
pub use counting::{CallCounts, CountingBackend};
pub use http::{HttpBackend, HttpOptions};
pub use stub::{ScriptEntry, ScriptMention, StubBackend, StubScript};

pub type BackendResult<T> = std::result::Result<T, BackendError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    NliLogits,
    Embed,
    Punctuate,
    Truecase,
    CorefPropose,
    AntecedentSelect,
    DecoderRewrite,
    CrossEncode,
}

impl Capability {
    pub const ALL: [Capability; 8] = [
        Capability::NliLogits,
        Capability::Embed,
        Capability::Punctuate,
        Capability::Truecase,
        Capability::CorefPropose,
        Capability::AntecedentSelect,
        Capability::DecoderRewrite,
        Capability::CrossEncode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::NliLogits => "nli_logits",
            Capability::Embed => "embed",
            Capability::Punctuate => "punctuate",
            Capability::Truecase => "truecase",
            Capability::CorefPropose => "coref_propose",
            Capability::AntecedentSelect => "antecedent_select",
            Capability::DecoderRewrite => "decoder_rewrite",
            Capability::CrossEncode => "cross_encode",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw three-way NLI logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliLogits {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

impl NliLogits {
    pub fn new(entailment: f64, neutral: f64, contradiction: f64) -> Self {
        NliLogits {
            entailment,
            neutral,
            contradiction,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.entailment, self.neutral, self.contradiction]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|z| z.is_finite())
    }
}

/// Calibrated three-way NLI probabilities; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliProbs {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

impl NliProbs {
    pub fn as_array(&self) -> [f64; 3] {
        [self.entailment, self.neutral, self.contradiction]
    }
}

/// Index of the three NLI classes in logit/probability arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NliClass {
    Entailment = 0,
    Neutral = 1,
    Contradiction = 2,
}

/// Dense sentence vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cosine similarity; zero vectors have similarity 0 with everything.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na: f64 = self.0.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = other.0.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

/// Candidate antecedents for one pronoun mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefProposal {
    /// Character offsets `[start, end)` of the pronoun in the claim.
    pub pronoun_span: (usize, usize),
    /// At most [`MAX_COREF_CANDIDATES`] antecedent strings, best first.
    pub candidates: Vec<String>,
}

pub const MAX_COREF_CANDIDATES: usize = 10;

/// Which capabilities a backend offers, where it lives, and which model
/// answers for each capability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    /// `"stub"` or the sidecar base URL.
    pub endpoint: String,
    pub models: BTreeMap<Capability, String>,
}

impl BackendDescriptor {
    pub fn has(&self, cap: Capability) -> bool {
        self.models.contains_key(&cap)
    }

    /// Fail before any work starts if a needed capability is missing.
    pub fn require(&self, caps: &[Capability]) -> BackendResult<()> {
        match caps.iter().find(|c| !self.has(**c)) {
            Some(c) => Err(BackendError::MissingCapability(c.to_string())),
            None => Ok(()),
        }
    }

    pub fn is_network(&self) -> bool {
        self.endpoint != "stub"
    }
}

/// The model-call surface. Batch methods preserve input order; their
/// single-item counterparts define correctness.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn nli_logits(&self, premise: &str, hypothesis: &str) -> BackendResult<NliLogits>;

    fn nli_logits_batch(&self, pairs: &[(&str, &str)]) -> BackendResult<Vec<NliLogits>> {
        pairs.iter().map(|(p, h)| self.nli_logits(p, h)).collect()
    }

    fn embed(&self, text: &str) -> BackendResult<Embedding>;

    fn embed_batch(&self, texts: &[&str]) -> BackendResult<Vec<Embedding>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }

    fn punctuate(&self, turn: &str) -> BackendResult<String>;

    fn truecase(&self, turn: &str) -> BackendResult<String>;

    fn coref_propose(&self, context: &[String], claim: &str) -> BackendResult<Vec<CorefProposal>>;

    fn antecedent_select(
        &self,
        context: &[String],
        claim: &str,
        proposal: &CorefProposal,
    ) -> BackendResult<usize>;

    fn decoder_rewrite(&self, context: &[String], claim: &str) -> BackendResult<String>;

    fn cross_encode(&self, query: &str, passage: &str) -> BackendResult<f64>;

    fn cross_encode_batch(&self, query: &str, passages: &[&str]) -> BackendResult<Vec<f64>> {
        passages
            .iter()
            .map(|p| self.cross_encode(query, p))
            .collect()
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }
    fn nli_logits(&self, premise: &str, hypothesis: &str) -> BackendResult<NliLogits> {
        (**self).nli_logits(premise, hypothesis)
    }
    fn nli_logits_batch(&self, pairs: &[(&str, &str)]) -> BackendResult<Vec<NliLogits>> {
        (**self).nli_logits_batch(pairs)
    }
    fn embed(&self, text: &str) -> BackendResult<Embedding> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> BackendResult<Vec<Embedding>> {
        (**self).embed_batch(texts)
    }
    fn punctuate(&self, turn: &str) -> BackendResult<String> {
        (**self).punctuate(turn)
    }
    fn truecase(&self, turn: &str) -> BackendResult<String> {
        (**self).truecase(turn)
    }
    fn coref_propose(&self, context: &[String], claim: &str) -> BackendResult<Vec<CorefProposal>> {
        (**self).coref_propose(context, claim)
    }
    fn antecedent_select(
        &self,
        context: &[String],
        claim: &str,
        proposal: &CorefProposal,
    ) -> BackendResult<usize> {
        (**self).antecedent_select(context, claim, proposal)
    }
    fn decoder_rewrite(&self, context: &[String], claim: &str) -> BackendResult<String> {
        (**self).decoder_rewrite(context, claim)
    }
    fn cross_encode(&self, query: &str, passage: &str) -> BackendResult<f64> {
        (**self).cross_encode(query, passage)
    }
    fn cross_encode_batch(&self, query: &str, passages: &[&str]) -> BackendResult<Vec<f64>> {
        (**self).cross_encode_batch(query, passages)
    }
}
