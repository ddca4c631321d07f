//! Segment-level metrics, event detection, run aggregation and paired tests.

mod metrics;
mod report;
mod wilcoxon;

pub use metrics::{
    confusion, detection_ratio, metrics, roc_auc, ConfusionCounts, Detection, Metrics,
};
pub use report::{aggregate, EvalReport, PatientRow};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult, EXACT_LIMIT};
