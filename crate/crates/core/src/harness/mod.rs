//! Training and evaluation protocol, log aggregation and charts.

mod aggregate;
mod config;
mod run;
pub mod svg;

pub use aggregate::{
    across_seeds, aggregate, collect, eval_means, gravity_series, summarize,
    trailing_moving_average, AgentLogs, AggregateOutput, Collected, SummaryRow,
    EVAL_BY_GRAVITY_SVG, MA_WINDOW, SERIES_EVAL_MEAN, SERIES_TRAIN, SUMMARY_CSV, TRAIN_EVAL_SVG,
};
pub use config::{agent_kind, AgentKind, ExperimentConfig, AGENT_KINDS, OUT_DIR_ENV};
pub use run::{
    evaluate_policy, read_config_echo, read_eval_log, read_train_log, run_experiment, run_seed,
    write_config_echo, Diagnostic, EvalRecord, RunSummary, SeedOutcome, TrainRecord, AGE_HIST,
    CHECKPOINTS, CONFIG_ECHO, DIAGNOSTICS, EVAL_LOG, TRAIN_LOG,
};
