//! End-to-end runs driven by an [`ExperimentConfig`].

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{config_echo, ExperimentConfig, InitMode};
use super::data::load_dataset;
use super::feasibility::interpolation_feasibility;
use super::metrics::{emit_metrics, RunSummary};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::network::{self, AssumptionEstimates, EstimateOptions, WeightVector};
use crate::subproblem::{self, SubproblemInput};
use crate::trainer::{self, Algorithm, TheoremAudit, TrainOutcome};

/// `w⁰` for the configured initialization mode.
pub fn initial_weights(config: &ExperimentConfig) -> WeightVector {
    let w = config.network.init_weights();
    match config.init {
        InitMode::Gaussian => w,
        InitMode::EpsScaled => w.scaled(1.0 / config.train.eps.sqrt()),
    }
}

fn dataset_for(config: &ExperimentConfig) -> Result<Dataset> {
    load_dataset(&config.dataset_source, config.loss, Some(config.network.output_dim()))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub train: TrainOutcome,
    pub summary: RunSummary,
    pub output_dir: PathBuf,
}

impl ExperimentOutcome {
    /// Completed with every inner-solver certificate satisfied.
    pub fn success(&self) -> bool {
        self.train.completed() && self.summary.certificates_satisfied
    }
}

/// Trains, audits the bound where it applies, and writes `metrics.csv` and
/// `summary.json` under `config.output_path`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let dataset = dataset_for(config)?;
    let w0 = initial_weights(config);
    let init_distance = trainer::init_distance(&config.network, &dataset, &w0)?;
    let train = trainer::run(&config.train, &config.network, &dataset, &w0)?;

    let (audit, audit_skipped) = match trainer::audit_theorem(
        &config.train,
        &train.records,
        &train.estimates,
        init_distance,
        config.network.output_dim(),
    ) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let complexity_constant = match (config.train.algorithm, init_distance) {
        (Algorithm::InnerGd, Some(dist)) => Some(trainer::inner_gd_complexity_constant(
            &config.train,
            &train.estimates,
            dist,
            config.network.output_dim(),
            dataset.loss_smoothness(),
        )),
        _ => None,
    };
    let echo = config_echo(&config.to_config_string())?;
    let summary = RunSummary {
        config: echo,
        horizon: config.train.horizon(),
        iterations_run: train.records.len(),
        termination: train.termination.clone(),
        final_gap: train.final_gap,
        estimates: train.estimates,
        audit,
        audit_skipped,
        complexity_constant,
        certificates_satisfied: train.certificates.iter().all(|c| c.satisfied),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    emit_metrics(&config.output_path, &train.records, &summary)?;
    Ok(ExperimentOutcome {
        train,
        summary,
        output_dir: config.output_path.clone(),
    })
}

/// Diagnostics at `w⁰` without training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub param_count: usize,
    pub samples: usize,
    pub horizon: usize,
    pub eta: f64,
    pub alpha_0: f64,
    pub initial_gap: f64,
    /// `None` for cross-entropy.
    pub init_distance: Option<f64>,
    /// `G`, `H` and `V` estimated at `w⁰` only.
    pub estimates: AssumptionEstimates,
    /// Rank of the stacked system `[η H_i] v = [α_i g_i]`.
    pub stacked_rank: usize,
    pub stacked_rows: usize,
    pub stacked_residual: f64,
    /// Bound evaluated with the `w⁰` estimates; trajectory estimates may be larger.
    pub predicted_bound: Option<TheoremAudit>,
}

pub fn check_experiment(config: &ExperimentConfig) -> Result<CheckReport> {
    config.train.validate()?;
    let spec = &config.network;
    let dataset = dataset_for(config)?;
    let w0 = initial_weights(config);
    let eps = config.train.eps;
    let eta = config.train.eta();
    let alpha_0 = trainer::lr_schedule(&config.train, 0, dataset.loss_smoothness())?;
    let alphas = vec![alpha_0; dataset.len()];

    let opts = EstimateOptions {
        seed: config.train.seed,
        ..EstimateOptions::default()
    };
    let mut estimates = network::estimate_constants_with(spec, std::slice::from_ref(&w0), &dataset.inputs, eps, &opts)?;
    let (outputs, stack) = network::forward_and_jacobian_all(spec, &w0, &dataset.inputs)?;
    let grads = outputs
        .iter()
        .zip(&dataset.losses)
        .map(|(z, l)| l.grad(z))
        .collect::<Result<Vec<_>>>()?;
    let input = SubproblemInput::new(stack, grads, eta, alphas.clone(), eps * eps)?;
    let v_reg = subproblem::solve_closed_form(&subproblem::assemble(&input)?)?;
    estimates = estimates.with_direction_bound(subproblem::check_direction_bound(&input, &v_reg, eps)?.v_implied);

    let stacked = interpolation_feasibility(spec, &w0, &dataset, eta, &alphas)?;
    let init_distance = trainer::init_distance(spec, &dataset, &w0)?;
    let initial_gap = trainer::gap_upper(spec, &dataset, &w0)?;
    let predicted_bound = init_distance.map(|dist| {
        let (init, rest) = trainer::theorem_rhs(&config.train, &estimates, dist, spec.output_dim(), dataset.loss_smoothness());
        TheoremAudit {
            lhs_avg_gap: initial_gap,
            rhs_bound: init + rest,
            rhs_init_term: init,
            rhs_constant_term: rest,
            satisfied: initial_gap <= init + rest,
        }
    });
    Ok(CheckReport {
        param_count: spec.param_count(),
        samples: dataset.len(),
        horizon: config.train.horizon(),
        eta,
        alpha_0,
        initial_gap,
        init_distance,
        estimates,
        stacked_rank: stacked.numeric_rank,
        stacked_rows: stacked.a_stack.nrows(),
        stacked_residual: stacked.residual_min,
        predicted_bound,
    })
}
