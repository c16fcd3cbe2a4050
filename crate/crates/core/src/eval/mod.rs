//! Retrieval-only, verification-only and end-to-end protocols with their
//! metrics and reports.
//!
//! ```
//! use claimgate::eval::{classwise_f1, Confusion};
//!
//! let m = classwise_f1(&Confusion([[5, 0, 0], [0, 0, 5], [0, 0, 5]]));
//! assert!((m.macro_f1 - 0.5556).abs() < 1e-4);
//! ```

mod metrics;
mod protocols;
mod report;
mod run;

pub use metrics::{
    classwise_f1, ir_metrics, ClassMetrics, Confusion, FvMetrics, IrAtK, QueryJudgement,
};
pub use protocols::{
    e2e_eval, fv_eval, hypothesis, ir_eval, metrics_from_records, predict_label, retrieval_query,
    route, routed_from_outcome, stage_rankings, FvRecord, FvReport, FvStatus, IrLevelReport,
    IrRecord, IrReport, IrStageReport, Protocol, ProtocolConfig, RoutedClaim, StageHits,
    SurfaceSelector, DEFAULT_DEPTHS,
};
pub use report::{fv_table, EvalReport, Predictions, Provenance, ReportMetrics};
pub use run::{evaluate_routed, protocol_sweep, run_protocol, EvalInputs};
