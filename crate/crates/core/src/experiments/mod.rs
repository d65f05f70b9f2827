//! Experiment harness: configs and presets, the generate / train / explain /
//! evaluate stages, and reports with their acceptance checks.
//!
//! A run directory looks like
//!
//! ```text
//! config.json
//! dataset/            rare: inputs/, targets/; state: rep_<r>/{train,test}/
//! model/rep_<r>/      model.json, training.csv, summary.json
//! explanations/rep_<r>/instance_<k>/
//!                     MASK.json, MASK.csv, <baseline>.csv
//! report/             report.json, summary.csv, timings.json, heatmaps/*.pgm
//! ```

mod config;
mod pipeline;
mod report;

pub use config::{
    apply_override, merge, resolve_config, AgreementSettings, ConfigSources, ExperimentConfig, ExperimentKind,
    Method, RareSettings, Scale, StateSettings,
};
pub use pipeline::{
    default_output_dir, evaluate, explain, generate, load_model, quiet, reproduce, resolve_stage_config, train,
    FitTiming, Progress, ReproduceOutcome, RunDir, Timings,
};
pub use report::{
    acceptance_checks, aggregate, reference_mask_fit_seconds, runtime_limit_seconds, AgreementMatrix, Check,
    ExperimentReport, MeanStd, MethodAggregate, MetricRecord, ModelSummary, METRIC_NAMES, REPORT_FORMAT_VERSION,
};
