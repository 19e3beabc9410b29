//! End-to-end orchestration: validated configuration, staged execution,
//! deterministic persistence, and the run manifest.

mod config;
mod output;
mod run;

pub use config::{
    parse_config, stage_closure, validate_config, AcousticsConfig, ConfigError, LearningMode,
    RunConfig, Stage, OUT_DIR_ENV,
};
pub use output::{csv_text, fmt_value, safe_name, OutputSet};
pub use run::{resolve_out_dir, run, PieceAcoustics, PipelineError, RunReport, StageReport};
