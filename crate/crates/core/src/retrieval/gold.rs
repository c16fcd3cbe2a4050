use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::index::{normalize_title, Index};
use crate::data::EvidenceItem;
use crate::text::normalize_for_match;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldLevel {
    Document,
    Sentence,
}

/// One gold item and the passages that satisfy it. An empty set means the
/// item cannot be located in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldTarget {
    pub page_title: String,
    pub sentence_id: Option<u64>,
    pub passages: BTreeSet<u32>,
}

impl GoldTarget {
    pub fn locatable(&self) -> bool {
        !self.passages.is_empty()
    }
}

/// Resolve gold evidence against the index.
///
/// Document level: one target per distinct page, matched by title.
/// Sentence level: one target per distinct (page, sentence id); a passage of
/// that page matches when it contains the normalised gold text. Items
/// without a sentence id are left out of the sentence level.
pub fn gold_targets(index: &Index, evidence: &[EvidenceItem], level: GoldLevel) -> Vec<GoldTarget> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for item in evidence {
        let title = normalize_title(&item.page_title);
        let key = match level {
            GoldLevel::Document => (title.clone(), None),
            GoldLevel::Sentence => match item.sentence_id {
                Some(sid) => (title.clone(), Some(sid)),
                None => continue,
            },
        };
        if !seen.insert(key) {
            continue;
        }
        let candidates = index.passages_of(&item.page_title).unwrap_or(&[]);
        let passages = match level {
            GoldLevel::Document => candidates.iter().copied().collect(),
            GoldLevel::Sentence => {
                let needle = normalize_for_match(&item.text);
                if needle.is_empty() {
                    BTreeSet::new()
                } else {
                    candidates
                        .iter()
                        .copied()
                        .filter(|&pid| {
                            normalize_for_match(&index.passage(pid).text).contains(&needle)
                        })
                        .collect()
                }
            }
        };
        out.push(GoldTarget {
            page_title: item.page_title.clone(),
            sentence_id: item.sentence_id,
            passages,
        });
    }
    out
}

/// For each target, the 1-based rank of its best matching passage in
/// `ranking`, if any.
pub fn first_hit_ranks(ranking: &[u32], targets: &[GoldTarget]) -> Vec<Option<usize>> {
    targets
        .iter()
        .map(|t| {
            ranking
                .iter()
                .position(|pid| t.passages.contains(pid))
                .map(|i| i + 1)
        })
        .collect()
}

/// Per-target hit flags at depth `k`.
pub fn match_gold(ranking: &[u32], targets: &[GoldTarget], k: usize) -> Vec<bool> {
    first_hit_ranks(ranking, targets)
        .into_iter()
        .map(|r| r.is_some_and(|r| r <= k))
        .collect()
}
