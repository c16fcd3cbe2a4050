//! JSON bodies of the sidecar protocol (version [`PROTOCOL_VERSION`]).
//!
//! All endpoints take `POST` with a JSON body except `GET /health`. Every
//! successful response carries the `model_id` that produced it. The full
//! document lives in `docs/protocol.md`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Capability, CorefProposal};

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub protocol_version: String,
    /// Capability name to exact model identifier.
    pub capabilities: BTreeMap<Capability, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPair {
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliRequest {
    pub pairs: Vec<TextPair>,
}

/// Raw logits in `[entailment, neutral, contradiction]` order; temperature
/// is applied client-side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliResponse {
    pub model_id: String,
    pub logits: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextsRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub model_id: String,
    pub vectors: Vec<Vec<f64>>,
}

/// Shared by `/punctuate` and `/truecase`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextsResponse {
    pub model_id: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorefProposeRequest {
    pub context: Vec<String>,
    pub claim: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireProposal {
    /// Character offsets into the claim.
    pub start: usize,
    pub end: usize,
    pub candidates: Vec<String>,
}

impl From<&CorefProposal> for WireProposal {
    fn from(p: &CorefProposal) -> Self {
        WireProposal {
            start: p.pronoun_span.0,
            end: p.pronoun_span.1,
            candidates: p.candidates.clone(),
        }
    }
}

impl From<WireProposal> for CorefProposal {
    fn from(p: WireProposal) -> Self {
        CorefProposal {
            pronoun_span: (p.start, p.end),
            candidates: p.candidates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorefProposeResponse {
    pub model_id: String,
    pub proposals: Vec<WireProposal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorefSelectRequest {
    pub context: Vec<String>,
    pub claim: String,
    pub proposal: WireProposal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorefSelectResponse {
    pub model_id: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub context: Vec<String>,
    pub claim: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteResponse {
    pub model_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEncodeRequest {
    pub query: String,
    pub passages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEncodeResponse {
    pub model_id: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    #[serde(default)]
    pub capability: Option<String>,
}
