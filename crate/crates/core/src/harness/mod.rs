//! Experiment configuration, built-in presets, multi-run execution,
//! statistics and CSV export.

pub mod config;
pub mod presets;
pub mod report;
pub mod run;

pub use config::{
    canonical_text, load_config, parse_config, preset_experiment, ExperimentSpec, MethodKind,
    Preset, PRESET_EXPERIMENTS,
};
pub use report::{export_results, shape_polyline, stats_report, Aggregate, ShapePoint, Summary};
pub use run::{run_experiment, Problem, RunRecord, RunReport, RunStatus};
