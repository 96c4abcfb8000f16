//! Experiment configuration, multi-seed runs, compressor certification and
//! bound tables.

mod certify;
mod compare;
mod config;
mod experiment;

pub use certify::{
    certification_panel, certify_all, certify_compressor, default_certification_set, report_csv, CertificationRow,
    BIAS_Z_THRESHOLD, CSV_HEADER as CERTIFICATION_HEADER, MIN_TRIALS,
};
pub use compare::{bounds_csv, compare_bounds, BoundConstants, BoundRow, CompareBoundsConfig, CSV_HEADER as BOUNDS_HEADER};
pub use config::{
    counterexample_config, ExperimentConfig, MethodSpec, PreparedExperiment, PreparedMethod, ProblemSpec, SamplingSpec,
    ScheduleSpec, DEFAULT_SEEDS,
};
pub use experiment::{
    execute, run_experiment, write_outputs, CheckpointSummary, ExperimentOutcome, MethodSummary, SeedRun,
    UnexpectedDivergence, METHODS_HEADER, SUMMARY_HEADER,
};
