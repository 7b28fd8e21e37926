//! Experiment configuration, dispatch and report files.

mod config;
mod report;
mod run;

pub use config::{
    CheckSpec, CurvatureSpec, DriftSpec, ExperimentConfig, FieldSpec, FlowSpec, Format, GradientEstimator,
    OutputSpec, RecoverOptions, TaskSpec, CONFIG_VERSION, MIN_PATHS,
};
pub use report::{emit_report, Plot, Table, MAX_SVG_SERIES};
pub use run::{run_experiment, Diagnostic, ReportBundle};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "GEOFLOW_THREADS";

/// Sizes the global worker pool from [`THREADS_ENV`] when it is set; results do
/// not depend on the count. Returns the count in use.
pub fn configure_threads_from_env() -> usize {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    rayon::current_num_threads()
}

#[cfg(test)]
mod tests;
