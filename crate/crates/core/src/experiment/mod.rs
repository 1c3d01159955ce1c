//! End-to-end experiments: configuration, the leave-one-class-out rotation and
//! rendered outputs.

mod config;
mod render;
mod run;

pub use config::{Context, ExperimentConfig, OpenSetSettings, TauSetting, UnknownSelection};
pub use render::{
    colorize, render_outputs, render_sweep, Legend, LEGEND_HEADER, SERIES_COLORS, UNKNOWN_COLOR,
};
pub use run::{
    resolve_palette, resolved_config, run_experiment, run_rotation, train_model, ExperimentReport,
    RunRecord, NO_UNKNOWN,
};
