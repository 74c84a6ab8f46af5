//! Evaluation toolkit: classification metrics over labeled manifests and
//! reliability/latency trials against a running service.

pub mod manifest;
pub mod metrics;
pub mod probe;
pub mod report;

pub use manifest::{LabeledManifest, ManifestError};
pub use metrics::{
    class_metrics, macro_average, overall_accuracy, per_class_accuracy, score_pairs, AccuracyGain, ClassMetrics,
    ConfusionMatrix, MetricWarning, Ratio,
};
pub use probe::{run_reliability_suite, Endpoint, Fixtures, ProbePlan, ProbeStep, ReliabilityReport};
pub use report::{render_comparison, run_inference_eval, EvalError, EvalReport};
