//! Configuration, parameter grids and the end-to-end pipeline.

mod config;
mod grid;
mod pipeline;

pub use config::{ExperimentConfig, FaultGrid, MlConfig, OutputConfig, ScenarioDefaults};
pub use grid::{expand_grid, expand_test_grid, expand_training_grid, scenario_seed, DataSet, GridScenario};
pub use pipeline::{
    emit_plot_data, ensure_design, estimate_stage, evaluate_stage, gen_data_stage, report_stage, run_pipeline,
    simulate_stage, synthesize_stage, train_stage, write_metrics_csv, GeneratedData, ModeReport, PipelineMode,
    PipelineReport, Run, RunPaths, ScenarioResult, Stamped, SETTLING_TIME,
};
