use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::FvMetrics;
use super::protocols::{
    FvRecord, FvReport, IrRecord, IrReport, Protocol, ProtocolConfig, RoutedClaim,
};
use crate::backends::BackendDescriptor;
use crate::error::{Error, Result};
use crate::gate::{ActivationStats, GateConfig};
use crate::retrieval::CascadeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: BackendDescriptor,
    /// Input name to SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportMetrics {
    Ir(IrReport),
    Fv(FvReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictions {
    Ir(Vec<IrRecord>),
    Fv(Vec<FvRecord>),
}

/// Everything one protocol run produced. Serialisation is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub config: ProtocolConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cascade: Option<CascadeConfig>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationStats>,
    pub metrics: ReportMetrics,
    pub predictions: Predictions,
    pub routing: Vec<RoutedClaim>,
}

fn f(x: f64) -> String {
    format!("{x:.4}")
}

pub fn fv_table(m: &FvMetrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "accuracy   {}", f(m.accuracy));
    let _ = writeln!(out, "macro-F1   {}", f(m.macro_f1));
    let _ = writeln!(out, "macro-rec  {}", f(m.macro_recall));
    let _ = writeln!(
        out,
        "{:<10} {:>9} {:>9} {:>9} {:>8}",
        "class", "precision", "recall", "F1", "support"
    );
    for c in &m.classes {
        let _ = writeln!(
            out,
            "{:<10} {:>9} {:>9} {:>9} {:>8}",
            c.label.as_str(),
            f(c.precision),
            f(c.recall),
            f(c.f1),
            c.support
        );
    }
    let _ = writeln!(out, "confusion (rows gold, cols predicted; S R NEI)");
    for row in m.confusion.0 {
        let _ = writeln!(out, "  {:>6} {:>6} {:>6}", row[0], row[1], row[2]);
    }
    out
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Metrics and per-instance predictions only, the parts that describe
    /// what the system did rather than how it was asked.
    pub fn outcome_json(&self) -> String {
        serde_json::to_string_pretty(&(&self.metrics, &self.predictions))
            .expect("report serialises")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "protocol {:?}  surface {}  k_turns {}{}",
            self.protocol,
            self.config.surface,
            self.config.k_turns,
            self.config
                .tau
                .map_or(String::new(), |t| format!("  tau {t:.2}"))
        );
        if let Some(a) = &self.activation {
            let _ = writeln!(
                out,
                "activation {} / {} = {} (degenerate {}, scored rate {}, mean score {})",
                a.accepted,
                a.total,
                f(a.rate),
                a.degenerate,
                a.scored_rate.map_or("NA".into(), f),
                a.mean_score.map_or("NA".into(), f)
            );
        }
        match &self.metrics {
            ReportMetrics::Ir(r) => {
                let _ = writeln!(
                    out,
                    "queries {}  degraded {}",
                    r.queries, r.degraded_queries
                );
                for (stage, name, lvl) in r.stages.iter().flat_map(|s| {
                    [
                        (s.stage, "sentence", &s.sentence),
                        (s.stage, "document", &s.document),
                    ]
                }) {
                    let _ = writeln!(
                        out,
                        "[{stage:?} / {name}] evaluated {}  excluded (no gold) {}  unmatchable items {}",
                        lvl.evaluated, lvl.excluded_no_gold, lvl.unmatchable_items
                    );
                    let _ = writeln!(
                        out,
                        "{:>5} {:>12} {:>12} {:>8} {:>8}",
                        "K", "macro-R@K", "micro-R@K", "nDCG@K", "ZHR@K"
                    );
                    for m in &lvl.metrics {
                        let _ = writeln!(
                            out,
                            "{:>5} {:>12} {:>12} {:>8} {:>8}",
                            m.k,
                            f(m.macro_recall),
                            f(m.micro_recall),
                            f(m.ndcg),
                            f(m.zhr)
                        );
                    }
                }
            }
            ReportMetrics::Fv(r) => {
                let _ = writeln!(
                    out,
                    "instances {}  evaluated {}  no evidence {}  backend errors {}  empty retrieval {}",
                    r.instances, r.evaluated, r.excluded_no_evidence, r.backend_errors, r.empty_retrieval
                );
                out.push_str(&fv_table(&r.metrics));
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        match &self.metrics {
            ReportMetrics::Ir(r) => {
                out.push_str("stage\tlevel\tk\tmacro_recall\tmicro_recall\tndcg\tzhr\n");
                for (stage, name, lvl) in r.stages.iter().flat_map(|s| {
                    [
                        (s.stage, "sentence", &s.sentence),
                        (s.stage, "document", &s.document),
                    ]
                }) {
                    let stage = serde_json::to_value(stage).expect("stage serialises");
                    let stage = stage.as_str().unwrap_or("");
                    for m in &lvl.metrics {
                        let _ = writeln!(
                            out,
                            "{stage}\t{name}\t{}\t{}\t{}\t{}\t{}",
                            m.k, m.macro_recall, m.micro_recall, m.ndcg, m.zhr
                        );
                    }
                }
            }
            ReportMetrics::Fv(r) => {
                let m = &r.metrics;
                out.push_str("accuracy\tmacro_f1\tmacro_recall\tf1_supports\tf1_refutes\tf1_nei\n");
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    m.accuracy,
                    m.macro_f1,
                    m.macro_recall,
                    m.classes[0].f1,
                    m.classes[1].f1,
                    m.classes[2].f1
                );
            }
        }
        out
    }

    pub fn routing_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.routing {
            out.push_str(&serde_json::to_string(r).expect("routing serialises"));
            out.push('\n');
        }
        out
    }

    /// Write `report.json`, `report.txt`, `metrics.tsv` and `routing.jsonl`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("report.json", self.to_json()),
            ("report.txt", self.to_table()),
            ("metrics.tsv", self.to_tsv()),
            ("routing.jsonl", self.routing_jsonl()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
