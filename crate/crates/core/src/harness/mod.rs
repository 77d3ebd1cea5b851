//! Seeded experiment runner, metrics files, plots and the oracle check suite.

mod config;
mod plot;
mod run;
mod verify;

pub use config::{
    resolve_output_dir, AgentOverrides, ConfigFile, ExperimentConfig, DEFAULT_EVAL_INTERVAL, DEFAULT_STEPS, DESK_ALPHA, DESK_BATCH, DESK_HIDDEN, DESK_KL_WEIGHT, DESK_UPDATES,
    OUTPUT_ROOT_VAR,
};
pub use plot::{aggregate, emit_plot, metrics_files, render_svg, strategy_label, Metric, Series};
pub use run::{evaluate, metrics_to_csv, parse_metrics, run_experiment, train, train_on, MetricsRow, TrainedRun, COLLECT_CYCLE, METRICS_HEADER};
pub use verify::{verify_suite, Check, EQUIVALENCE_TOL};
