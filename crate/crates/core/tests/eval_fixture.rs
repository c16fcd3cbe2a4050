use std::path::{Path, PathBuf};

use claimgate::backends::{
    Backend, BackendDescriptor, BackendError, BackendResult, CorefProposal, CountingBackend,
    Embedding, NliLogits, StubBackend, StubScript,
};
use claimgate::data::{load_split, DialogueInstance, Label};
use claimgate::eval::{
    protocol_sweep, run_protocol, EvalInputs, FvStatus, Predictions, Protocol, ProtocolConfig,
    Provenance, ReportMetrics, SurfaceSelector,
};
use claimgate::gate::{
    compute_all_signals, default_tau_grid, CandidateKind, GateConfig, GateSignals,
};
use claimgate::pipeline::{build_all, ClaimSurfaces, PipelineConfig, SurfaceBuilder};
use claimgate::retrieval::{
    read_corpus, Bm25Params, CascadeConfig, CascadeStage, ChunkParams, CorpusDoc, Index,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

struct World {
    insts: Vec<DialogueInstance>,
    surfaces: Vec<ClaimSurfaces>,
    signals: Vec<GateSignals>,
    index: Index,
    stub: StubBackend,
}

fn world() -> World {
    let insts = load_split(&fixture("dialfact_mini.jsonl"), None).unwrap();
    let stub = StubBackend::new()
        .with_script(StubScript::from_path(&fixture("stub_script.json")).unwrap());
    let surfaces = build_all(
        &SurfaceBuilder::new(&stub, PipelineConfig::default()),
        &insts,
    );
    let signals = compute_all_signals(
        &insts,
        &surfaces,
        CandidateKind::R4,
        &GateConfig::default(),
        &stub,
    )
    .unwrap();
    let docs = read_corpus(&fixture("corpus.jsonl")).unwrap();
    let index = Index::build(docs, ChunkParams::default(), Bm25Params::default()).unwrap();
    World {
        insts,
        surfaces,
        signals,
        index,
        stub,
    }
}

fn provenance(b: &dyn Backend) -> Provenance {
    Provenance {
        backend: b.descriptor().clone(),
        inputs: Default::default(),
    }
}

fn config(surface: &str, tau: Option<f64>) -> ProtocolConfig {
    ProtocolConfig {
        surface: surface.parse().unwrap(),
        tau,
        ..ProtocolConfig::default()
    }
}

#[test]
fn gate_above_every_score_reproduces_r0() {
    let w = world();
    let cascade = CascadeConfig::default();
    let gate = GateConfig::default();
    let prov = provenance(&w.stub);
    let inputs = EvalInputs {
        instances: &w.insts,
        surfaces: &w.surfaces,
        signals: Some(&w.signals),
        index: Some(&w.index),
        cascade: &cascade,
        gate: &gate,
        backend: &w.stub,
        provenance: &prov,
    };
    let max_scored = w
        .signals
        .iter()
        .filter(|s| s.status == claimgate::gate::GateStatus::Scored)
        .map(|s| s.s)
        .fold(0.0, f64::max);
    let tau = (max_scored + 1e-6).min(1.0);
    for p in [Protocol::Ir, Protocol::Fv, Protocol::E2e] {
        let gated = run_protocol(p, &config("gated-r4", Some(tau)), &inputs).unwrap();
        let plain = run_protocol(p, &config("r0", None), &inputs).unwrap();
        assert_eq!(gated.outcome_json(), plain.outcome_json(), "{p:?}");
        assert!(gated.routing.iter().all(|r| r.surface
            == w.insts
                .iter()
                .find(|i| i.instance_id == r.instance_id)
                .unwrap()
                .response));
    }
}

#[test]
fn sweep_rows_equal_standalone_runs() {
    let w = world();
    let cascade = CascadeConfig::default();
    let gate = GateConfig::default();
    let prov = provenance(&w.stub);
    let inputs = EvalInputs {
        instances: &w.insts,
        surfaces: &w.surfaces,
        signals: Some(&w.signals),
        index: Some(&w.index),
        cascade: &cascade,
        gate: &gate,
        backend: &w.stub,
        provenance: &prov,
    };
    let grid = default_tau_grid();
    let cfg = config("gated-r4", Some(0.5));
    let table = protocol_sweep(Protocol::Fv, &cfg, &inputs, CandidateKind::R4, &grid).unwrap();
    assert_eq!(table.rows.len(), 17);
    for row in &table.rows {
        let solo = run_protocol(Protocol::Fv, &config("gated-r4", Some(row.tau)), &inputs).unwrap();
        assert_eq!(
            serde_json::to_string(&row.metrics).unwrap(),
            serde_json::to_string(&solo.metrics).unwrap()
        );
        assert_eq!(row.activation, solo.activation);
    }
    for pair in table.rows.windows(2) {
        assert!(pair[1]
            .accepted_ids
            .iter()
            .all(|id| pair[0].accepted_ids.contains(id)));
    }
}

#[test]
fn fv_counts_exclusions() {
    let w = world();
    let cascade = CascadeConfig::default();
    let gate = GateConfig::default();
    let prov = provenance(&w.stub);
    let inputs = EvalInputs {
        instances: &w.insts,
        surfaces: &w.surfaces,
        signals: None,
        index: None,
        cascade: &cascade,
        gate: &gate,
        backend: &w.stub,
        provenance: &prov,
    };
    let r = run_protocol(Protocol::Fv, &config("r0", None), &inputs).unwrap();
    let ReportMetrics::Fv(fv) = &r.metrics else {
        panic!()
    };
    let no_evidence = w.insts.iter().filter(|i| i.evidence.is_empty()).count();
    assert_eq!(fv.excluded_no_evidence, no_evidence);
    assert_eq!(fv.evaluated + no_evidence, w.insts.len());
    assert_eq!(fv.metrics.confusion.total() as usize, fv.evaluated);
    assert!(r.cascade.is_none() && r.gate.is_none() && r.activation.is_none());
    assert!(run_protocol(Protocol::Ir, &config("r0", None), &inputs).is_err());
}

#[test]
fn ir_reports_each_stage_at_its_own_depths() {
    let w = world();
    let cascade = CascadeConfig::default();
    let gate = GateConfig::default();
    let prov = provenance(&w.stub);
    let inputs = EvalInputs {
        instances: &w.insts,
        surfaces: &w.surfaces,
        signals: None,
        index: Some(&w.index),
        cascade: &cascade,
        gate: &gate,
        backend: &w.stub,
        provenance: &prov,
    };
    let r = run_protocol(Protocol::Ir, &config("r0", None), &inputs).unwrap();
    let ReportMetrics::Ir(ir) = &r.metrics else {
        panic!()
    };
    let factual = w
        .insts
        .iter()
        .filter(|i| i.subset == claimgate::data::Subset::Factual)
        .count();
    assert_eq!(ir.queries, factual);
    let ks = |i: usize| {
        ir.stages[i]
            .sentence
            .metrics
            .iter()
            .map(|m| m.k)
            .collect::<Vec<_>>()
    };
    assert_eq!(ks(0), vec![1, 5, 10, 20, 50, 100, 180]);
    assert_eq!(ks(1), vec![1, 5, 10]);
    assert_eq!(ks(2), vec![1]);
    assert_eq!(ir.stages[2].stage, CascadeStage::CrossEncoder);
    // One item points at a page missing from the corpus.
    assert_eq!(ir.stages[0].document.unmatchable_items, 1);
    // The only gold item of one query has no sentence id.
    assert_eq!(ir.stages[0].sentence.excluded_no_gold, 1);
    for st in &ir.stages {
        for pair in st.sentence.metrics.windows(2) {
            assert!(pair[1].macro_recall >= pair[0].macro_recall);
            assert!(pair[1].micro_recall >= pair[0].micro_recall);
        }
    }
    let Predictions::Ir(recs) = &r.predictions else {
        panic!()
    };
    assert!(recs
        .iter()
        .all(|q| q.stages.len() == 3 && q.degraded.is_none()));
}

/// The stub with a cross-encoder that always fails.
struct BrokenReranker(StubBackend);

impl Backend for BrokenReranker {
    fn descriptor(&self) -> &BackendDescriptor {
        self.0.descriptor()
    }
    fn nli_logits(&self, p: &str, h: &str) -> BackendResult<NliLogits> {
        self.0.nli_logits(p, h)
    }
    fn embed(&self, t: &str) -> BackendResult<Embedding> {
        self.0.embed(t)
    }
    fn punctuate(&self, t: &str) -> BackendResult<String> {
        self.0.punctuate(t)
    }
    fn truecase(&self, t: &str) -> BackendResult<String> {
        self.0.truecase(t)
    }
    fn coref_propose(&self, c: &[String], claim: &str) -> BackendResult<Vec<CorefProposal>> {
        self.0.coref_propose(c, claim)
    }
    fn antecedent_select(
        &self,
        c: &[String],
        claim: &str,
        p: &CorefProposal,
    ) -> BackendResult<usize> {
        self.0.antecedent_select(c, claim, p)
    }
    fn decoder_rewrite(&self, c: &[String], claim: &str) -> BackendResult<String> {
        self.0.decoder_rewrite(c, claim)
    }
    fn cross_encode(&self, _q: &str, _p: &str) -> BackendResult<f64> {
        Err(BackendError::Transport {
            endpoint: "/cross_encode".into(),
            attempts: 1,
            message: "down".into(),
        })
    }
}

#[test]
fn failed_stage_degrades_to_previous_ranking() {
    let w = world();
    let broken = BrokenReranker(w.stub.clone());
    let cascade = CascadeConfig::default();
    let gate = GateConfig::default();
    let prov = provenance(&broken);
    let inputs = EvalInputs {
        instances: &w.insts,
        surfaces: &w.surfaces,
        signals: None,
        index: Some(&w.index),
        cascade: &cascade,
        gate: &gate,
        backend: &broken,
        provenance: &prov,
    };
    let r = run_protocol(Protocol::Ir, &config("r0", None), &inputs).unwrap();
    let ReportMetrics::Ir(ir) = &r.metrics else {
        panic!()
    };
    assert_eq!(ir.degraded_queries, ir.queries);
    let Predictions::Ir(recs) = &r.predictions else {
        panic!()
    };
    for q in recs {
        assert!(q.degraded.is_some());
        assert_eq!(q.stages[2].top, q.stages[1].top[..1].to_vec());
    }
    let r = run_protocol(Protocol::E2e, &config("r0", None), &inputs).unwrap();
    let ReportMetrics::Fv(e2e) = &r.metrics else {
        panic!()
    };
    assert_eq!(e2e.degraded_retrieval, w.insts.len());
    assert_eq!(e2e.evaluated, w.insts.len());
}

#[test]
fn empty_retrieval_predicts_nei_without_verifier() {
    let w = world();
    let index = Index::build(
        vec![CorpusDoc {
            title: "Unrelated".into(),
            text: "zzz qqq xxx".into(),
        }],
        ChunkParams::default(),
        Bm25Params::default(),
    )
    .unwrap();
    let counting = CountingBackend::new(&w.stub);
    let cascade = CascadeConfig::default();
    let gate = GateConfig::default();
    let prov = provenance(&counting);
    let inputs = EvalInputs {
        instances: &w.insts,
        surfaces: &w.surfaces,
        signals: None,
        index: Some(&index),
        cascade: &cascade,
        gate: &gate,
        backend: &counting,
        provenance: &prov,
    };
    let r = run_protocol(Protocol::E2e, &config("r0", None), &inputs).unwrap();
    let Predictions::Fv(recs) = &r.predictions else {
        panic!()
    };
    assert!(recs
        .iter()
        .all(|r| r.status == FvStatus::EmptyRetrieval && r.predicted == Some(Label::Nei)));
    assert_eq!(
        claimgate::backends::CallCounts::get(&counting.counts.nli),
        0
    );
}

#[test]
fn gated_run_needs_signals_and_tau() {
    let w = world();
    let cascade = CascadeConfig::default();
    let gate = GateConfig::default();
    let prov = provenance(&w.stub);
    let inputs = EvalInputs {
        instances: &w.insts,
        surfaces: &w.surfaces,
        signals: None,
        index: None,
        cascade: &cascade,
        gate: &gate,
        backend: &w.stub,
        provenance: &prov,
    };
    assert!(run_protocol(Protocol::Fv, &config("gated-r4", Some(0.5)), &inputs).is_err());
    assert!(run_protocol(Protocol::Fv, &config("gated-r4", None), &inputs).is_err());
    let bad = ProtocolConfig {
        surface: SurfaceSelector::Fixed(claimgate::pipeline::Stage::R0),
        tau: Some(1.5),
        ..ProtocolConfig::default()
    };
    assert!(run_protocol(Protocol::Fv, &bad, &inputs).is_err());
}
