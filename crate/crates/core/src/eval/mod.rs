//! Evaluation: confusion matrices and per-class metrics with a binomial
//! confidence interval, ROC / precision-recall curves with AUC, PCA of
//! penultimate features, and CSV / JSON / SVG report writers.

mod curves;
mod metrics;
mod pca;
mod report;
pub mod svg;

pub use curves::{binary_curves, macro_auc, roc_pr, Curve, CurveKind, CurvePair};
pub use metrics::{confidence_interval, confusion, f1_score, metrics, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use pca::{pca_project, Pca};
pub use report::{write_eval_report, write_pca_report, EvalReport};
