//! The consistency gate that routes each instance between the original
//! claim and a rewrite candidate.
//!
//! ```
//! use claimgate::gate::{gate_score, GateWeights};
//!
//! let w = GateWeights::default();
//! let s = gate_score(0.9, 0.8, 0.1, &w);
//! assert!((s - 0.88).abs() < 1e-12);
//! ```

mod calibrate;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate_logits, calibrate_temperature, mean_nll, CalibrationResult};
pub use sweep::{default_tau_grid, gate_sweep, standalone_row, SweepRow, SweepTable};

use crate::backends::{Backend, BackendError, BackendResult, NliLogits, NliProbs};
use crate::data::DialogueInstance;
use crate::error::{Error, Result};
use crate::pipeline::{ClaimSurfaces, Stage};
use crate::text::{ends_with_terminal, join_turns};

pub const DEFAULT_TEMPERATURE: f64 = 4.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for GateWeights {
    fn default() -> Self {
        GateWeights {
            alpha: 0.4,
            beta: 0.2,
            gamma: 0.4,
        }
    }
}

impl GateWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = GateWeights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.alpha, self.beta, self.gamma];
        if parts.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config(format!(
                "gate weights must be non-negative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "gate weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub weights: GateWeights,
    pub tau: f64,
    pub temperature: f64,
    pub sim_clamp: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            weights: GateWeights::default(),
            tau: 0.5,
            temperature: DEFAULT_TEMPERATURE,
            sim_clamp: true,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        check_tau(self.tau)?;
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

pub fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateKind {
    R4,
    R5,
}

impl CandidateKind {
    pub fn stage(self) -> Stage {
        match self {
            CandidateKind::R4 => Stage::R4,
            CandidateKind::R5 => Stage::R5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateStatus {
    Scored,
    DegenerateIdentity,
    BackendError,
    Unavailable,
}

/// Threshold-independent gate signals for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSignals {
    pub instance_id: String,
    pub candidate_kind: CandidateKind,
    pub status: GateStatus,
    pub e: f64,
    pub c: f64,
    pub sim: f64,
    pub s: f64,
    pub candidate: String,
    pub original: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub instance_id: String,
    pub candidate_kind: CandidateKind,
    pub status: GateStatus,
    pub e: f64,
    pub c: f64,
    pub sim: f64,
    pub s: f64,
    pub tau: f64,
    pub accepted: bool,
    pub routed_surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `softmax(z / T)` with max subtraction.
pub fn apply_temperature(logits: NliLogits, temperature: f64) -> BackendResult<NliProbs> {
    if !logits.is_finite() {
        return Err(BackendError::InvalidInput(format!(
            "non-finite logits {:?}",
            logits.as_array()
        )));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(BackendError::InvalidInput(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let z = logits.as_array().map(|v| v / temperature);
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex = z.map(|v| (v - m).exp());
    let sum: f64 = ex.iter().sum();
    Ok(NliProbs {
        entailment: ex[0] / sum,
        neutral: ex[1] / sum,
        contradiction: ex[2] / sum,
    })
}

/// Minimum entailment and maximum contradiction over both directions.
pub fn combine_directions(forward: NliProbs, backward: NliProbs) -> (f64, f64) {
    (
        forward.entailment.min(backward.entailment),
        forward.contradiction.max(backward.contradiction),
    )
}

/// `(e, c)` for a text pair from one batched call of two NLI pairs.
pub fn bidirectional_signals(
    a: &str,
    b: &str,
    backend: &dyn Backend,
    temperature: f64,
) -> BackendResult<(f64, f64)> {
    let logits = backend.nli_logits_batch(&[(a, b), (b, a)])?;
    if logits.len() != 2 {
        return Err(BackendError::Protocol {
            endpoint: "nli".into(),
            message: format!("expected 2 results, got {}", logits.len()),
        });
    }
    Ok(combine_directions(
        apply_temperature(logits[0], temperature)?,
        apply_temperature(logits[1], temperature)?,
    ))
}

pub fn gate_score(e: f64, sim: f64, c: f64, weights: &GateWeights) -> f64 {
    weights.alpha * e + weights.beta * sim + weights.gamma * (1.0 - c)
}

pub fn clamp_similarity(sim: f64, clamp: bool) -> f64 {
    if clamp {
        sim.clamp(0.0, 1.0)
    } else {
        sim
    }
}

/// The NLI premise for the original side: each context turn ends in
/// sentence-final punctuation, turns and claim are joined by single spaces.
pub fn gate_premise(context: &[String], r0: &str) -> String {
    let turns: Vec<String> = context
        .iter()
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if ends_with_terminal(t) {
                t.to_owned()
            } else {
                format!("{t}.")
            }
        })
        .collect();
    join_turns(turns.iter().map(String::as_str).chain([r0]))
}

fn signals_shell(
    instance: &DialogueInstance,
    kind: CandidateKind,
    status: GateStatus,
    candidate: &str,
) -> GateSignals {
    let (e, c, sim, s) = if status == GateStatus::DegenerateIdentity {
        (1.0, 0.0, 1.0, 1.0)
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    GateSignals {
        instance_id: instance.instance_id.clone(),
        candidate_kind: kind,
        status,
        e,
        c,
        sim,
        s,
        candidate: candidate.to_owned(),
        original: instance.response.clone(),
        error: None,
    }
}

/// Score one candidate; the result does not depend on tau.
pub fn compute_signals(
    instance: &DialogueInstance,
    surfaces: &ClaimSurfaces,
    kind: CandidateKind,
    config: &GateConfig,
    backend: &dyn Backend,
) -> GateSignals {
    let stage = kind.stage();
    let candidate = surfaces.get(stage);
    let r0 = surfaces.r0.as_str();
    if !surfaces.is_available(stage) {
        let mut out = signals_shell(instance, kind, GateStatus::Unavailable, candidate);
        out.error = Some(format!("{stage} surface unavailable"));
        return out;
    }
    let short_circuit = kind == CandidateKind::R4 && !surfaces.r4_candidate_present;
    if short_circuit || candidate == r0 {
        return signals_shell(instance, kind, GateStatus::DegenerateIdentity, candidate);
    }
    let premise = gate_premise(&instance.context_turns, r0);
    let scored = (|| -> BackendResult<(f64, f64, f64)> {
        let (e, c) = bidirectional_signals(&premise, candidate, backend, config.temperature)?;
        let emb = backend.embed_batch(&[r0, candidate])?;
        if emb.len() != 2 {
            return Err(BackendError::Protocol {
                endpoint: "embed".into(),
                message: format!("expected 2 vectors, got {}", emb.len()),
            });
        }
        Ok((
            e,
            c,
            clamp_similarity(emb[0].cosine(&emb[1]), config.sim_clamp),
        ))
    })();
    match scored {
        Ok((e, c, sim)) => {
            let mut out = signals_shell(instance, kind, GateStatus::Scored, candidate);
            out.e = e;
            out.c = c;
            out.sim = sim;
            out.s = gate_score(e, sim, c, &config.weights);
            out
        }
        Err(err) => {
            let mut out = signals_shell(instance, kind, GateStatus::BackendError, candidate);
            out.error = Some(err.to_string());
            out
        }
    }
}

/// Threshold cached signals. Ties accept.
pub fn threshold(signals: &GateSignals, tau: f64) -> GateOutcome {
    let accepted = match signals.status {
        GateStatus::Scored => signals.s >= tau,
        GateStatus::DegenerateIdentity => true,
        GateStatus::BackendError | GateStatus::Unavailable => false,
    };
    let routed_surface = if accepted && signals.status == GateStatus::Scored {
        signals.candidate.clone()
    } else {
        signals.original.clone()
    };
    GateOutcome {
        instance_id: signals.instance_id.clone(),
        candidate_kind: signals.candidate_kind,
        status: signals.status,
        e: signals.e,
        c: signals.c,
        sim: signals.sim,
        s: signals.s,
        tau,
        accepted,
        routed_surface,
        error: signals.error.clone(),
    }
}

pub fn decide(
    instance: &DialogueInstance,
    surfaces: &ClaimSurfaces,
    kind: CandidateKind,
    config: &GateConfig,
    backend: &dyn Backend,
) -> GateOutcome {
    threshold(
        &compute_signals(instance, surfaces, kind, config, backend),
        config.tau,
    )
}

/// Signals for a whole split. `surfaces` must align with `instances`.
pub fn compute_all_signals(
    instances: &[DialogueInstance],
    surfaces: &[ClaimSurfaces],
    kind: CandidateKind,
    config: &GateConfig,
    backend: &dyn Backend,
) -> Result<Vec<GateSignals>> {
    check_alignment(instances, surfaces)?;
    Ok(instances
        .par_iter()
        .zip(surfaces.par_iter())
        .map(|(i, s)| compute_signals(i, s, kind, config, backend))
        .collect())
}

pub(crate) fn check_alignment(
    instances: &[DialogueInstance],
    surfaces: &[ClaimSurfaces],
) -> Result<()> {
    if instances.len() != surfaces.len() {
        return Err(Error::Data(format!(
            "{} instances but {} surface records",
            instances.len(),
            surfaces.len()
        )));
    }
    if let Some((i, s)) = instances
        .iter()
        .zip(surfaces)
        .find(|(i, s)| i.instance_id != s.instance_id || i.response != s.r0)
    {
        return Err(Error::Data(format!(
            "surface record `{}` does not match instance `{}`",
            s.instance_id, i.instance_id
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationStats {
    pub total: usize,
    pub accepted: usize,
    pub rate: f64,
    pub degenerate: usize,
    /// Rate over scored outcomes only.
    pub scored_rate: Option<f64>,
    /// Mean score over scored outcomes.
    pub mean_score: Option<f64>,
    pub backend_errors: usize,
    pub unavailable: usize,
}

/// `None` for an empty list.
pub fn activation_rate(outcomes: &[GateOutcome]) -> Option<ActivationStats> {
    if outcomes.is_empty() {
        return None;
    }
    let accepted = outcomes.iter().filter(|o| o.accepted).count();
    let count = |st: GateStatus| outcomes.iter().filter(|o| o.status == st).count();
    let scored: Vec<&GateOutcome> = outcomes
        .iter()
        .filter(|o| o.status == GateStatus::Scored)
        .collect();
    let (scored_rate, mean_score) = if scored.is_empty() {
        (None, None)
    } else {
        let n = scored.len() as f64;
        (
            Some(scored.iter().filter(|o| o.accepted).count() as f64 / n),
            Some(scored.iter().map(|o| o.s).sum::<f64>() / n),
        )
    };
    Some(ActivationStats {
        total: outcomes.len(),
        accepted,
        rate: accepted as f64 / outcomes.len() as f64,
        degenerate: count(GateStatus::DegenerateIdentity),
        scored_rate,
        mean_score,
        backend_errors: count(GateStatus::BackendError),
        unavailable: count(GateStatus::Unavailable),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_reference() {
        let p = apply_temperature(NliLogits::new(2.0, 0.0, -2.0), 1.0).unwrap();
        assert!(close(p.entailment, 0.8668, 1e-4));
        assert!(close(p.neutral, 0.1173, 1e-4));
        assert!(close(p.contradiction, 0.0159, 1e-4));
    }

    #[test]
    fn softmax_limits() {
        let p = apply_temperature(NliLogits::new(7.0, -3.0, 1.0), 1e6).unwrap();
        for v in p.as_array() {
            assert!(close(v, 1.0 / 3.0, 1e-5));
        }
        let p = apply_temperature(NliLogits::new(5.0, 5.0, 5.0), 0.3).unwrap();
        for v in p.as_array() {
            assert!(close(v, 1.0 / 3.0, 1e-15));
        }
        assert!(apply_temperature(NliLogits::new(f64::NAN, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn direction_combination() {
        let f = NliProbs {
            entailment: 0.8,
            neutral: 0.1,
            contradiction: 0.1,
        };
        let b = NliProbs {
            entailment: 0.6,
            neutral: 0.1,
            contradiction: 0.3,
        };
        assert_eq!(combine_directions(f, b), (0.6, 0.3));
        assert_eq!(combine_directions(b, f), (0.6, 0.3));
    }

    #[test]
    fn score_extremes() {
        let w = GateWeights::default();
        assert_eq!(gate_score(1.0, 1.0, 0.0, &w), 1.0);
        assert_eq!(gate_score(0.0, 0.0, 1.0, &w), 0.0);
        assert!(GateWeights::new(0.5, 0.5, 0.5).is_err());
        assert!(GateWeights::new(1.2, -0.2, 0.0).is_err());
    }

    #[test]
    fn premise_join() {
        let ctx = vec![
            "hi there".to_string(),
            "How are you?".to_string(),
            " ".into(),
        ];
        assert_eq!(gate_premise(&ctx, "fine"), "hi there. How are you? fine");
        assert_eq!(gate_premise(&[], "fine"), "fine");
    }

    #[test]
    fn tau_guard() {
        assert!(check_tau(1.01).is_err());
        assert!(check_tau(-0.01).is_err());
        assert!(check_tau(1.0).is_ok());
    }
}
