//! Shot files, run configuration, JSON reports and the command functions the
//! binary wraps.

mod commands;
mod config;
mod report;
mod shotfile;

pub use commands::{
    cmd_estimate, cmd_oracle, cmd_sample, render_report, render_sample, write_output,
};
pub use config::{
    DualsFile, ObservableSpec, OptimizerSettings, RunConfig, StateSpec, DUALS_SCHEMA_VERSION,
};
pub use report::{
    DatasetInfo, DirectionReport, EstimateReport, ExactMoments, Moments, ObservableReport,
    OracleEntry, OracleReport, SplitReport, REPORT_SCHEMA_VERSION,
};
pub use shotfile::{
    load_shot_file, read_shot_file, render_shot_file, write_shot_file, SHOT_FORMAT,
};
