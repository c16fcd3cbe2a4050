use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{classwise_f1, ir_metrics, Confusion, FvMetrics, IrAtK, QueryJudgement};
use crate::backends::{Backend, NliLogits};
use crate::data::{DialogueInstance, Label, Subset};
use crate::error::{Error, Result};
use crate::gate::{
    check_alignment, check_tau, threshold, CandidateKind, GateOutcome, GateSignals, GateStatus,
};
use crate::pipeline::{ClaimSurfaces, Stage};
use crate::retrieval::{
    first_hit_ranks, gold_targets, run_cascade, CascadeConfig, CascadeResult, CascadeStage,
    GoldLevel, GoldTarget, Index,
};
use crate::text::join_turns;

pub const DEFAULT_DEPTHS: [usize; 7] = [1, 5, 10, 20, 50, 100, 180];

/// Which claim surface an evaluation consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SurfaceSelector {
    Fixed(Stage),
    Gated(CandidateKind),
}

impl fmt::Display for SurfaceSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceSelector::Fixed(s) => write!(f, "{s}"),
            SurfaceSelector::Gated(k) => write!(f, "gated-{}", k.stage()),
        }
    }
}

impl FromStr for SurfaceSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gated-r4" => Ok(SurfaceSelector::Gated(CandidateKind::R4)),
            "gated-r5" => Ok(SurfaceSelector::Gated(CandidateKind::R5)),
            other => other
                .parse::<Stage>()
                .map(SurfaceSelector::Fixed)
                .map_err(|_| {
                    format!("unknown surface `{s}` (expected r0..r5, gated-r4, gated-r5)")
                }),
        }
    }
}

impl From<SurfaceSelector> for String {
    fn from(s: SurfaceSelector) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SurfaceSelector {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ir,
    Fv,
    E2e,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub surface: SurfaceSelector,
    pub k_turns: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub depths: Vec<usize>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            surface: SurfaceSelector::Fixed(Stage::R0),
            k_turns: 2,
            tau: None,
            depths: DEFAULT_DEPTHS.to_vec(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau {
            check_tau(t)?;
        }
        if matches!(self.surface, SurfaceSelector::Gated(_)) && self.tau.is_none() {
            return Err(Error::Config(format!(
                "surface {} needs a gate threshold",
                self.surface
            )));
        }
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(Error::Config("IR depths must be positive".into()));
        }
        Ok(())
    }
}

/// The surface chosen for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedClaim {
    pub instance_id: String,
    pub source: Stage,
    pub surface: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateOutcome>,
}

/// Resolve the selector for every instance. Gated selectors threshold the
/// cached `signals` at `tau`.
pub fn route(
    instances: &[DialogueInstance],
    surfaces: &[ClaimSurfaces],
    selector: SurfaceSelector,
    signals: Option<&[GateSignals]>,
    tau: Option<f64>,
) -> Result<Vec<RoutedClaim>> {
    check_alignment(instances, surfaces)?;
    match selector {
        SurfaceSelector::Fixed(stage) => Ok(surfaces
            .iter()
            .map(|s| RoutedClaim {
                instance_id: s.instance_id.clone(),
                source: stage,
                surface: s.get(stage).to_owned(),
                gate: None,
            })
            .collect()),
        SurfaceSelector::Gated(kind) => {
            let signals = signals
                .ok_or_else(|| Error::Config("gated surface requires gate signals".into()))?;
            let tau = tau.ok_or_else(|| Error::Config("gated surface requires tau".into()))?;
            check_tau(tau)?;
            if signals.len() != instances.len() {
                return Err(Error::Data(format!(
                    "{} gate signals for {} instances",
                    signals.len(),
                    instances.len()
                )));
            }
            signals
                .iter()
                .zip(instances)
                .map(|(sig, inst)| {
                    if sig.instance_id != inst.instance_id || sig.candidate_kind != kind {
                        return Err(Error::Data(format!(
                            "gate signal `{}` ({:?}) does not match instance `{}` ({kind:?})",
                            sig.instance_id, sig.candidate_kind, inst.instance_id
                        )));
                    }
                    Ok(routed_from_outcome(threshold(sig, tau)))
                })
                .collect()
        }
    }
}

/// The routing a gate decision implies: the candidate when a scored
/// candidate was accepted, R0 otherwise.
pub fn routed_from_outcome(outcome: GateOutcome) -> RoutedClaim {
    let source = if outcome.accepted && outcome.status == GateStatus::Scored {
        outcome.candidate_kind.stage()
    } else {
        Stage::R0
    };
    RoutedClaim {
        instance_id: outcome.instance_id.clone(),
        source,
        surface: outcome.routed_surface.clone(),
        gate: Some(outcome),
    }
}

/// Retrieval query: all context turns followed by the claim surface.
pub fn retrieval_query(context: &[String], surface: &str) -> String {
    join_turns(context.iter().map(String::as_str).chain([surface]))
}

/// Verification hypothesis: the last `k` turns followed by the surface.
pub fn hypothesis(context: &[String], k: usize, surface: &str) -> String {
    let start = context.len().saturating_sub(k);
    join_turns(context[start..].iter().map(String::as_str).chain([surface]))
}

/// Argmax over (entailment, neutral, contradiction), first maximum wins.
pub fn predict_label(logits: &NliLogits) -> Label {
    let z = logits.as_array();
    let mut best = 0;
    for i in 1..3 {
        if z[i] > z[best] {
            best = i;
        }
    }
    match best {
        0 => Label::Supports,
        1 => Label::Nei,
        _ => Label::Refutes,
    }
}

fn check_routing(instances: &[DialogueInstance], routed: &[RoutedClaim]) -> Result<()> {
    if instances.len() != routed.len()
        || instances
            .iter()
            .zip(routed)
            .any(|(i, r)| i.instance_id != r.instance_id)
    {
        return Err(Error::Data("routing does not align with instances".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrLevelReport {
    pub evaluated: usize,
    pub excluded_no_gold: usize,
    pub unmatchable_items: usize,
    pub metrics: Vec<IrAtK>,
}

/// Metrics of one cascade stage's ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrStageReport {
    pub stage: CascadeStage,
    pub sentence: IrLevelReport,
    pub document: IrLevelReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrReport {
    pub queries: usize,
    pub degraded_queries: usize,
    pub stages: Vec<IrStageReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHits {
    pub stage: CascadeStage,
    pub top: Vec<u32>,
    pub sentence_first_hit: Vec<Option<usize>>,
    pub document_first_hit: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrRecord {
    pub instance_id: String,
    pub source: Stage,
    pub query: String,
    pub stages: Vec<StageHits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
}

const RECORD_TOP: usize = 10;

/// Ranked ids per enabled stage. A stage that failed inherits the ranking
/// of the last completed stage, cut to its own depth.
pub fn stage_rankings(
    result: &CascadeResult,
    cascade: &CascadeConfig,
) -> Vec<(CascadeStage, Vec<u32>)> {
    let ids = |hits: &[crate::retrieval::PassageHit]| {
        hits.iter().map(|h| h.passage_id).collect::<Vec<u32>>()
    };
    let bm25 = ids(&result.bm25);
    let mut out = vec![(CascadeStage::Bm25, bm25.clone())];
    let mut last = bm25;
    if cascade.dense {
        let dense = if result.completed == CascadeStage::Bm25 {
            last.iter().take(cascade.dense_keep).copied().collect()
        } else {
            ids(&result.dense)
        };
        out.push((CascadeStage::Dense, dense.clone()));
        last = dense;
    }
    if cascade.cross_encoder {
        let top = if result.completed == CascadeStage::CrossEncoder {
            ids(&result.top)
        } else {
            last.iter().take(cascade.final_keep).copied().collect()
        };
        out.push((CascadeStage::CrossEncoder, top));
    }
    out
}

fn stage_depths(depths: &[usize], cap: usize) -> Vec<usize> {
    let d: Vec<usize> = depths.iter().copied().filter(|&k| k <= cap).collect();
    if d.is_empty() {
        vec![cap]
    } else {
        d
    }
}

struct QueryOutcome {
    record: IrRecord,
    /// Per stage: sentence and document judgements.
    judgements: Vec<(Option<QueryJudgement>, Option<QueryJudgement>)>,
    unmatchable: (usize, usize),
}

fn aggregate(
    outcomes: &[QueryOutcome],
    stage_idx: usize,
    sentence: bool,
    unmatchable: usize,
    depths: &[usize],
) -> IrLevelReport {
    let mut kept = Vec::new();
    for q in outcomes {
        let j = if sentence {
            &q.judgements[stage_idx].0
        } else {
            &q.judgements[stage_idx].1
        };
        if let Some(j) = j {
            kept.push(j.clone());
        }
    }
    IrLevelReport {
        evaluated: kept.len(),
        excluded_no_gold: outcomes.len() - kept.len(),
        unmatchable_items: unmatchable,
        metrics: ir_metrics(&kept, depths),
    }
}

/// Retrieval-only evaluation on the factual subset. Never calls the
/// verifier.
pub fn ir_eval(
    instances: &[DialogueInstance],
    routed: &[RoutedClaim],
    index: &Index,
    cascade: &CascadeConfig,
    backend: &dyn Backend,
    depths: &[usize],
) -> Result<(IrReport, Vec<IrRecord>)> {
    check_routing(instances, routed)?;
    cascade.validate()?;
    backend
        .descriptor()
        .require(&cascade.required_capabilities())?;

    let outcomes: Vec<QueryOutcome> = instances
        .par_iter()
        .zip(routed.par_iter())
        .filter(|(i, _)| i.subset == Subset::Factual)
        .map(|(inst, r)| {
            let query = retrieval_query(&inst.context_turns, &r.surface);
            let result = run_cascade(&query, index, cascade, backend);
            let sent = gold_targets(index, &inst.evidence, GoldLevel::Sentence);
            let doc = gold_targets(index, &inst.evidence, GoldLevel::Document);
            let judge = |ranking: &[u32], targets: &[GoldTarget]| {
                targets
                    .iter()
                    .any(GoldTarget::locatable)
                    .then(|| QueryJudgement::from_ranking(ranking, targets))
            };
            let mut stages = Vec::new();
            let mut judgements = Vec::new();
            for (stage, ranking) in stage_rankings(&result, cascade) {
                judgements.push((judge(&ranking, &sent), judge(&ranking, &doc)));
                stages.push(StageHits {
                    stage,
                    top: ranking.iter().take(RECORD_TOP).copied().collect(),
                    sentence_first_hit: first_hit_ranks(&ranking, &sent),
                    document_first_hit: first_hit_ranks(&ranking, &doc),
                });
            }
            QueryOutcome {
                record: IrRecord {
                    instance_id: inst.instance_id.clone(),
                    source: r.source,
                    query,
                    stages,
                    degraded: result.degraded,
                },
                judgements,
                unmatchable: (
                    sent.iter().filter(|t| !t.locatable()).count(),
                    doc.iter().filter(|t| !t.locatable()).count(),
                ),
            }
        })
        .collect();

    let unmatch_s = outcomes.iter().map(|q| q.unmatchable.0).sum();
    let unmatch_d = outcomes.iter().map(|q| q.unmatchable.1).sum();
    let mut caps = vec![(CascadeStage::Bm25, cascade.bm25_keep)];
    if cascade.dense {
        caps.push((CascadeStage::Dense, cascade.dense_keep));
    }
    if cascade.cross_encoder {
        caps.push((CascadeStage::CrossEncoder, cascade.final_keep));
    }
    let stages = caps
        .iter()
        .enumerate()
        .map(|(i, &(stage, cap))| {
            let d = stage_depths(depths, cap);
            IrStageReport {
                stage,
                sentence: aggregate(&outcomes, i, true, unmatch_s, &d),
                document: aggregate(&outcomes, i, false, unmatch_d, &d),
            }
        })
        .collect();
    let report = IrReport {
        queries: outcomes.len(),
        degraded_queries: outcomes
            .iter()
            .filter(|q| q.record.degraded.is_some())
            .count(),
        stages,
    };
    Ok((report, outcomes.into_iter().map(|q| q.record).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FvStatus {
    Evaluated,
    /// E2E only: nothing retrieved, NEI predicted without a verifier call.
    EmptyRetrieval,
    NoEvidence,
    BackendError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvRecord {
    pub instance_id: String,
    pub source: Stage,
    pub hypothesis: String,
    pub gold: Label,
    pub status: FvStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logits: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub premise_passage: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvReport {
    pub instances: usize,
    pub evaluated: usize,
    pub excluded_no_evidence: usize,
    pub backend_errors: usize,
    pub empty_retrieval: usize,
    pub degraded_retrieval: usize,
    pub metrics: FvMetrics,
}

fn verify(
    inst: &DialogueInstance,
    r: &RoutedClaim,
    k: usize,
    premise: &str,
    backend: &dyn Backend,
) -> FvRecord {
    let hyp = hypothesis(&inst.context_turns, k, &r.surface);
    let mut rec = FvRecord {
        instance_id: inst.instance_id.clone(),
        source: r.source,
        hypothesis: hyp,
        gold: inst.label,
        status: FvStatus::Evaluated,
        predicted: None,
        logits: None,
        premise_passage: None,
        note: None,
    };
    match backend.nli_logits(premise, &rec.hypothesis) {
        Ok(z) if z.is_finite() => {
            rec.predicted = Some(predict_label(&z));
            rec.logits = Some(z.as_array());
        }
        Ok(z) => {
            rec.status = FvStatus::BackendError;
            rec.note = Some(format!("non-finite logits {:?}", z.as_array()));
        }
        Err(e) => {
            rec.status = FvStatus::BackendError;
            rec.note = Some(e.to_string());
        }
    }
    rec
}

fn summarize(records: &[FvRecord], degraded: usize) -> FvReport {
    let mut confusion = Confusion::default();
    for r in records {
        if let Some(p) = r.predicted {
            confusion.add(r.gold, p);
        }
    }
    let count = |s: FvStatus| records.iter().filter(|r| r.status == s).count();
    FvReport {
        instances: records.len(),
        evaluated: records.iter().filter(|r| r.predicted.is_some()).count(),
        excluded_no_evidence: count(FvStatus::NoEvidence),
        backend_errors: count(FvStatus::BackendError),
        empty_retrieval: count(FvStatus::EmptyRetrieval),
        degraded_retrieval: degraded,
        metrics: classwise_f1(&confusion),
    }
}

/// Verification with gold evidence as the premise. Never touches an index.
pub fn fv_eval(
    instances: &[DialogueInstance],
    routed: &[RoutedClaim],
    k_turns: usize,
    backend: &dyn Backend,
) -> Result<(FvReport, Vec<FvRecord>)> {
    check_routing(instances, routed)?;
    backend
        .descriptor()
        .require(&[crate::backends::Capability::NliLogits])?;
    let records: Vec<FvRecord> = instances
        .par_iter()
        .zip(routed.par_iter())
        .map(|(inst, r)| {
            let premise = join_turns(inst.evidence.iter().map(|e| e.text.as_str()));
            if premise.is_empty() {
                return FvRecord {
                    instance_id: inst.instance_id.clone(),
                    source: r.source,
                    hypothesis: hypothesis(&inst.context_turns, k_turns, &r.surface),
                    gold: inst.label,
                    status: FvStatus::NoEvidence,
                    predicted: None,
                    logits: None,
                    premise_passage: None,
                    note: None,
                };
            }
            verify(inst, r, k_turns, &premise, backend)
        })
        .collect();
    Ok((summarize(&records, 0), records))
}

/// Retrieve with the routed surface, verify against the top-1 passage.
pub fn e2e_eval(
    instances: &[DialogueInstance],
    routed: &[RoutedClaim],
    k_turns: usize,
    index: &Index,
    cascade: &CascadeConfig,
    backend: &dyn Backend,
) -> Result<(FvReport, Vec<FvRecord>)> {
    check_routing(instances, routed)?;
    cascade.validate()?;
    let mut caps = cascade.required_capabilities();
    caps.push(crate::backends::Capability::NliLogits);
    backend.descriptor().require(&caps)?;
    let out: Vec<(FvRecord, bool)> = instances
        .par_iter()
        .zip(routed.par_iter())
        .map(|(inst, r)| {
            let query = retrieval_query(&inst.context_turns, &r.surface);
            let result = run_cascade(&query, index, cascade, backend);
            let degraded = result.degraded.is_some();
            let rec = match result.top1() {
                Some(hit) => {
                    let premise = &index.passage(hit.passage_id).text;
                    let mut rec = verify(inst, r, k_turns, premise, backend);
                    rec.premise_passage = Some(hit.passage_id);
                    rec.note = rec.note.take().or(result.degraded);
                    rec
                }
                None => FvRecord {
                    instance_id: inst.instance_id.clone(),
                    source: r.source,
                    hypothesis: hypothesis(&inst.context_turns, k_turns, &r.surface),
                    gold: inst.label,
                    status: FvStatus::EmptyRetrieval,
                    predicted: Some(Label::Nei),
                    logits: None,
                    premise_passage: None,
                    note: Some("no passage retrieved; empty premise".into()),
                },
            };
            (rec, degraded)
        })
        .collect();
    let degraded = out.iter().filter(|(_, d)| *d).count();
    let records: Vec<FvRecord> = out.into_iter().map(|(r, _)| r).collect();
    Ok((summarize(&records, degraded), records))
}

/// FV metrics computed from records produced elsewhere.
pub fn metrics_from_records(records: &[FvRecord]) -> FvMetrics {
    summarize(records, 0).metrics
}
