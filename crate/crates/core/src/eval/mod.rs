//! Metrics, significance tests and score reports.

mod metrics;
mod report;
mod stats;

pub use metrics::{
    audit_frequencies, degenerate_audit, g_score, iid_metrics, iid_metrics_from_classes, pass_rate, AuditReport,
    IidMetrics, IidScore, DEFAULT_AUDIT_THRESHOLD,
};
pub use report::{
    compile_report, render_table, scenario_sample, Baseline, ReportOptions, RunOutcome, ScenarioScores, ScoreReport,
    SignificanceEntry,
};
pub use stats::{
    binomial_test, discordant_counts, g_randomisation_test, randomisation_test, randomisation_test_with, GSample,
    Marker, ALPHA, MIN_RESAMPLES,
};
