use super::protocols::{
    e2e_eval, fv_eval, ir_eval, route, routed_from_outcome, Protocol, ProtocolConfig, RoutedClaim,
    SurfaceSelector,
};
use super::report::{EvalReport, Predictions, Provenance, ReportMetrics};
use crate::backends::Backend;
use crate::data::DialogueInstance;
use crate::error::{Error, Result};
use crate::gate::{
    activation_rate, gate_sweep, CandidateKind, GateConfig, GateOutcome, GateSignals, SweepTable,
};
use crate::pipeline::ClaimSurfaces;
use crate::retrieval::{CascadeConfig, Index};

/// Everything a protocol run reads. Signals are only consulted for gated
/// surfaces and the index only for retrieval protocols.
#[derive(Clone, Copy)]
pub struct EvalInputs<'a> {
    pub instances: &'a [DialogueInstance],
    pub surfaces: &'a [ClaimSurfaces],
    pub signals: Option<&'a [GateSignals]>,
    pub index: Option<&'a Index>,
    pub cascade: &'a CascadeConfig,
    pub gate: &'a GateConfig,
    pub backend: &'a dyn Backend,
    pub provenance: &'a Provenance,
}

fn need_index<'a>(inputs: &EvalInputs<'a>) -> Result<&'a Index> {
    inputs
        .index
        .ok_or_else(|| Error::Config("this protocol needs a passage index".into()))
}

/// Metrics and predictions for an already routed claim set.
pub fn evaluate_routed(
    protocol: Protocol,
    config: &ProtocolConfig,
    inputs: &EvalInputs<'_>,
    routed: &[RoutedClaim],
) -> Result<(ReportMetrics, Predictions)> {
    Ok(match protocol {
        Protocol::Ir => {
            let (r, p) = ir_eval(
                inputs.instances,
                routed,
                need_index(inputs)?,
                inputs.cascade,
                inputs.backend,
                &config.depths,
            )?;
            (ReportMetrics::Ir(r), Predictions::Ir(p))
        }
        Protocol::Fv => {
            let (r, p) = fv_eval(inputs.instances, routed, config.k_turns, inputs.backend)?;
            (ReportMetrics::Fv(r), Predictions::Fv(p))
        }
        Protocol::E2e => {
            let (r, p) = e2e_eval(
                inputs.instances,
                routed,
                config.k_turns,
                need_index(inputs)?,
                inputs.cascade,
                inputs.backend,
            )?;
            (ReportMetrics::Fv(r), Predictions::Fv(p))
        }
    })
}

fn assemble(
    protocol: Protocol,
    config: &ProtocolConfig,
    inputs: &EvalInputs<'_>,
    routing: Vec<RoutedClaim>,
    metrics: ReportMetrics,
    predictions: Predictions,
) -> EvalReport {
    let gated = matches!(config.surface, SurfaceSelector::Gated(_));
    let outcomes: Vec<GateOutcome> = routing.iter().filter_map(|r| r.gate.clone()).collect();
    EvalReport {
        protocol,
        config: config.clone(),
        gate: gated.then_some(*inputs.gate),
        cascade: (protocol != Protocol::Fv).then_some(*inputs.cascade),
        provenance: inputs.provenance.clone(),
        activation: if gated {
            activation_rate(&outcomes)
        } else {
            None
        },
        metrics,
        predictions,
        routing,
    }
}

/// Route, evaluate and assemble a full report.
pub fn run_protocol(
    protocol: Protocol,
    config: &ProtocolConfig,
    inputs: &EvalInputs<'_>,
) -> Result<EvalReport> {
    config.validate()?;
    let routing = route(
        inputs.instances,
        inputs.surfaces,
        config.surface,
        inputs.signals,
        config.tau,
    )?;
    let (metrics, predictions) = evaluate_routed(protocol, config, inputs, &routing)?;
    Ok(assemble(
        protocol,
        config,
        inputs,
        routing,
        metrics,
        predictions,
    ))
}

/// Evaluate `protocol` at every grid point from cached signals. Each row's
/// metrics are what [`run_protocol`] reports at that threshold.
pub fn protocol_sweep(
    protocol: Protocol,
    config: &ProtocolConfig,
    inputs: &EvalInputs<'_>,
    kind: CandidateKind,
    grid: &[f64],
) -> Result<SweepTable<ReportMetrics>> {
    let signals = inputs
        .signals
        .ok_or_else(|| Error::Config("a sweep needs cached gate signals".into()))?;
    if let Some(s) = signals.iter().find(|s| s.candidate_kind != kind) {
        return Err(Error::Data(format!(
            "signal `{}` is for {:?}, sweep is over {kind:?}",
            s.instance_id, s.candidate_kind
        )));
    }
    let mut table = gate_sweep(signals, grid, |outcomes| {
        let routed: Vec<RoutedClaim> = outcomes.iter().cloned().map(routed_from_outcome).collect();
        evaluate_routed(protocol, config, inputs, &routed).map(|(m, _)| m)
    })?;
    table.candidate_kind = Some(kind);
    Ok(table)
}
