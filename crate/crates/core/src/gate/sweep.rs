use serde::{Deserialize, Serialize};

use super::{
    activation_rate, check_tau, threshold, ActivationStats, CandidateKind, GateOutcome, GateSignals,
};
use crate::error::{Error, Result};

/// 0.20, 0.25, ..., 1.00.
pub fn default_tau_grid() -> Vec<f64> {
    (20..=100).step_by(5).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<M> {
    pub tau: f64,
    pub activation: Option<ActivationStats>,
    pub accepted_ids: Vec<String>,
    pub metrics: M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable<M> {
    pub candidate_kind: Option<CandidateKind>,
    pub rows: Vec<SweepRow<M>>,
}

/// One row evaluated from scratch at `tau`.
pub fn standalone_row<M, F>(signals: &[GateSignals], tau: f64, hook: &mut F) -> Result<SweepRow<M>>
where
    F: FnMut(&[GateOutcome]) -> Result<M>,
{
    check_tau(tau)?;
    let outcomes: Vec<GateOutcome> = signals.iter().map(|s| threshold(s, tau)).collect();
    let metrics = hook(&outcomes)?;
    Ok(SweepRow {
        tau,
        activation: activation_rate(&outcomes),
        accepted_ids: outcomes
            .iter()
            .filter(|o| o.accepted)
            .map(|o| o.instance_id.clone())
            .collect(),
        metrics,
    })
}

/// Re-threshold cached signals at every grid point and evaluate the hook
/// once per point. Signals are never recomputed.
pub fn gate_sweep<M, F>(signals: &[GateSignals], grid: &[f64], mut hook: F) -> Result<SweepTable<M>>
where
    F: FnMut(&[GateOutcome]) -> Result<M>,
{
    if grid.is_empty() {
        return Err(Error::Config("tau grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("tau grid must be strictly increasing".into()));
    }
    let rows = grid
        .iter()
        .map(|&tau| standalone_row(signals, tau, &mut hook))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        candidate_kind: signals.first().map(|s| s.candidate_kind),
        rows,
    })
}

impl<M> SweepTable<M> {
    /// Tab-separated table: tau, activation columns, then `columns(metrics)`.
    pub fn to_tsv<F>(&self, columns: F) -> String
    where
        F: Fn(&M) -> Vec<(String, String)>,
    {
        let mut out = String::new();
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        for (i, row) in self.rows.iter().enumerate() {
            let cols = columns(&row.metrics);
            if i == 0 {
                out.push_str("tau\taccepted\ttotal\tactivation\tactivation_scored\tmean_score");
                for (name, _) in &cols {
                    out.push('\t');
                    out.push_str(name);
                }
                out.push('\n');
            }
            let a = row.activation.as_ref();
            out.push_str(&format!(
                "{:.2}\t{}\t{}\t{}\t{}\t{}",
                row.tau,
                a.map_or(0, |a| a.accepted),
                a.map_or(0, |a| a.total),
                fmt_opt(a.map(|a| a.rate)),
                fmt_opt(a.and_then(|a| a.scored_rate)),
                fmt_opt(a.and_then(|a| a.mean_score)),
            ));
            for (_, v) in cols {
                out.push('\t');
                out.push_str(&v);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::GateStatus;

    #[test]
    fn grid_has_seventeen_points() {
        let g = default_tau_grid();
        assert_eq!(g.len(), 17);
        assert_eq!(g[0], 0.2);
        assert_eq!(g[16], 1.0);
        assert_eq!(g[3], 0.35);
    }

    #[test]
    fn rejects_unsorted_grid() {
        let r = gate_sweep::<(), _>(&[], &[0.5, 0.4], |_| Ok(()));
        assert!(r.is_err());
    }

    #[test]
    fn nesting_on_synthetic_signals() {
        let sigs: Vec<GateSignals> = (0..30)
            .map(|i| GateSignals {
                instance_id: format!("i{i}"),
                candidate_kind: CandidateKind::R4,
                status: GateStatus::Scored,
                e: 0.0,
                c: 0.0,
                sim: 0.0,
                s: i as f64 / 30.0,
                candidate: "x".into(),
                original: "y".into(),
                error: None,
            })
            .collect();
        let t = gate_sweep(&sigs, &default_tau_grid(), |o| {
            Ok(o.iter().filter(|o| o.accepted).count())
        })
        .unwrap();
        for w in t.rows.windows(2) {
            assert!(w[1].metrics <= w[0].metrics);
        }
    }
}
