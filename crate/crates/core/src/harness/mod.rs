//! Experiment plumbing: configuration, datasets, baselines, the interpolation
//! feasibility and initialization-scaling experiments, and metric output.

pub mod baseline;
pub mod config;
pub mod data;
pub mod experiment;
pub mod feasibility;
pub mod metrics;

pub use baseline::{run_baseline, run_baseline_on, Baseline, BaselineRun};
pub use config::{DatasetSource, ExperimentConfig, InitMode, LossFamily};
pub use data::load_dataset;
pub use experiment::{check_experiment, run_experiment, CheckReport, ExperimentOutcome};
pub use feasibility::{interpolation_feasibility, q_norm_scaling_experiment, QScaleRow, StackedSystem};
pub use metrics::{emit_metrics, read_metrics, MetricsRow, RunSummary};
