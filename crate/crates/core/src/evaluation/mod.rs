//! Metrics, the experiment runner and report rendering.

mod experiment;
mod metrics;
mod report;

pub use experiment::{
    evaluate, prepare_dataset, run_experiment, run_experiments, run_on_dataset, EvaluationReport, ExperimentSpec,
    Relabel, SourceKind, SourceSpec, SplitResult,
};
pub use metrics::{class_metrics, confusion_matrix, macro_f1, ClassMetrics, ConfusionMatrix, MetricSummary};
pub use report::{parse_report_csv, render_report, report_rows, ReportFormat, ReportRow, CSV_HEADER};
