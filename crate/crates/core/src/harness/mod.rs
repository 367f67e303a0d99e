//! Scenario configuration, Monte-Carlo runs, sweeps and CSV output.

mod config;
mod output;
mod run;
pub mod selftest;

pub use config::{ScenarioConfig, SourceSpec, SrnSettings};
pub use output::{
    dump_signals, format_results, format_signals, real, sweep_metadata, write_signals, write_text,
    RESULTS_CSV_HEADER, SIGNALS_CSV_HEADER,
};
pub use run::{
    build_codes, build_link, eval_observations, evaluate_prepared, prepare, run_point, run_sweep,
    sweep_points, trace_prepared, trace_signals, Prepared, ResultRow, SignalTrace, SweepAxis,
    System,
};
