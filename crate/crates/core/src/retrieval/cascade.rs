use serde::{Deserialize, Serialize};

use super::index::Index;
use crate::backends::{Backend, BackendResult, Capability};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub bm25_fetch: usize,
    pub bm25_keep: usize,
    pub dense: bool,
    pub dense_fetch: usize,
    pub dense_keep: usize,
    pub cross_encoder: bool,
    pub final_keep: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            bm25_fetch: 300,
            bm25_keep: 180,
            dense: true,
            dense_fetch: 20,
            dense_keep: 10,
            cross_encoder: true,
            final_keep: 1,
        }
    }
}

impl CascadeConfig {
    pub fn bm25_only() -> Self {
        CascadeConfig {
            dense: false,
            cross_encoder: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.bm25_fetch >= self.bm25_keep
            && self.dense_fetch >= self.dense_keep
            && self.bm25_keep > 0
            && self.dense_keep > 0
            && self.final_keep > 0;
        if !ok {
            return Err(Error::Config(format!(
                "cascade depths must satisfy fetch >= keep > 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn required_capabilities(&self) -> Vec<Capability> {
        let mut caps = Vec::new();
        if self.dense {
            caps.push(Capability::Embed);
        }
        if self.cross_encoder {
            caps.push(Capability::CrossEncode);
        }
        caps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CascadeStage {
    Bm25,
    Dense,
    CrossEncoder,
}

/// A retrieved passage with whatever stage scores it received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageHit {
    pub passage_id: u32,
    pub doc_id: String,
    pub bm25_score: f64,
    pub bm25_rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ce_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ce_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    /// BM25 keep set, in BM25 order.
    pub bm25: Vec<PassageHit>,
    /// Dense keep set, in dense order; empty when the stage did not run.
    pub dense: Vec<PassageHit>,
    /// Final selection of the last completed stage.
    pub top: Vec<PassageHit>,
    pub completed: CascadeStage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
}

impl CascadeResult {
    /// Full ranking: the final selection, then the rest of the dense keep
    /// set, then the rest of the BM25 keep set.
    pub fn ranking(&self) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::with_capacity(self.bm25.len());
        for h in self.top.iter().chain(&self.dense).chain(&self.bm25) {
            if !out.contains(&h.passage_id) {
                out.push(h.passage_id);
            }
        }
        out
    }

    pub fn top1(&self) -> Option<&PassageHit> {
        self.top.first()
    }
}

fn sort_desc(scored: &mut [(usize, f64)], hits: &[PassageHit]) {
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(hits[a.0].passage_id.cmp(&hits[b.0].passage_id))
    });
}

fn dense_stage(
    query: &str,
    keep: &[PassageHit],
    index: &Index,
    config: &CascadeConfig,
    backend: &dyn Backend,
) -> BackendResult<Vec<PassageHit>> {
    let mut texts: Vec<&str> = vec![query];
    texts.extend(
        keep.iter()
            .map(|h| index.passage(h.passage_id).text.as_str()),
    );
    let vecs = backend.embed_batch(&texts)?;
    let q = &vecs[0];
    let mut scored: Vec<(usize, f64)> = vecs[1..]
        .iter()
        .enumerate()
        .map(|(i, v)| (i, q.cosine(v)))
        .collect();
    sort_desc(&mut scored, keep);
    scored.truncate(config.dense_fetch);
    scored.truncate(config.dense_keep);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(rank, (i, s))| PassageHit {
            dense_score: Some(s),
            dense_rank: Some(rank + 1),
            ..keep[i].clone()
        })
        .collect())
}

fn ce_stage(
    query: &str,
    keep: &[PassageHit],
    index: &Index,
    config: &CascadeConfig,
    backend: &dyn Backend,
) -> BackendResult<Vec<PassageHit>> {
    let texts: Vec<&str> = keep
        .iter()
        .map(|h| index.passage(h.passage_id).text.as_str())
        .collect();
    let scores = backend.cross_encode_batch(query, &texts)?;
    let mut scored: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    sort_desc(&mut scored, keep);
    scored.truncate(config.final_keep);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(rank, (i, s))| PassageHit {
            ce_score: Some(s),
            ce_rank: Some(rank + 1),
            ..keep[i].clone()
        })
        .collect())
}

/// BM25, then dense rerank, then cross-encoder selection. Each stage only
/// sees the previous stage's keep set. A backend failure in a later stage
/// degrades to the last completed stage.
pub fn run_cascade(
    query: &str,
    index: &Index,
    config: &CascadeConfig,
    backend: &dyn Backend,
) -> CascadeResult {
    let bm25: Vec<PassageHit> = index
        .search(query, config.bm25_fetch)
        .into_iter()
        .take(config.bm25_keep)
        .enumerate()
        .map(|(rank, (pid, score))| PassageHit {
            passage_id: pid,
            doc_id: index.passage(pid).doc_id.clone(),
            bm25_score: score,
            bm25_rank: rank + 1,
            dense_score: None,
            dense_rank: None,
            ce_score: None,
            ce_rank: None,
        })
        .collect();
    let mut result = CascadeResult {
        top: bm25.iter().take(config.final_keep).cloned().collect(),
        bm25,
        dense: Vec::new(),
        completed: CascadeStage::Bm25,
        degraded: None,
    };
    if result.bm25.is_empty() || !config.dense {
        return result;
    }
    match dense_stage(query, &result.bm25, index, config, backend) {
        Ok(dense) => {
            result.top = dense.iter().take(config.final_keep).cloned().collect();
            result.dense = dense;
            result.completed = CascadeStage::Dense;
        }
        Err(e) => {
            result.degraded = Some(format!("dense stage failed: {e}"));
            return result;
        }
    }
    if !config.cross_encoder {
        return result;
    }
    match ce_stage(query, &result.dense, index, config, backend) {
        Ok(top) => {
            result.top = top;
            result.completed = CascadeStage::CrossEncoder;
        }
        Err(e) => result.degraded = Some(format!("cross-encoder stage failed: {e}")),
    }
    result
}
