//! First-order baselines on the same objective: full-batch gradient descent and
//! minibatch SGD.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::load_dataset;
use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::network::{self, AssumptionEstimates, MlpSpec, WeightVector};
use crate::trainer::IterationRecord;

/// Objective value beyond which a baseline run counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(deny_unknown_fields)]
pub enum Baseline {
    #[serde(rename = "gd")]
    FullGradientDescent { step: f64, iters: usize },
    #[serde(rename = "sgd")]
    StochasticGd { step: f64, iters: usize, batch: usize, seed: u64 },
}

impl Baseline {
    pub fn iters(&self) -> usize {
        match *self {
            Baseline::FullGradientDescent { iters, .. } | Baseline::StochasticGd { iters, .. } => iters,
        }
    }

    pub fn step(&self) -> f64 {
        match *self {
            Baseline::FullGradientDescent { step, .. } | Baseline::StochasticGd { step, .. } => step,
        }
    }

    fn validate(&self) -> Result<()> {
        let step = self.step();
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidConfig(format!("baseline step must be positive, got {step}")));
        }
        if let Baseline::StochasticGd { batch: 0, .. } = self {
            return Err(Error::InvalidConfig("baseline batch must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    /// One record per iteration. `residual_phi` is empty, `inner_iters` is 0,
    /// `alpha_t` holds the step size and `v_norm_sq` the squared norm of the
    /// (minibatch) gradient.
    pub records: Vec<IterationRecord>,
    pub weights: WeightVector,
    pub final_gap: f64,
    pub diverged: bool,
}

/// Objective and `(1/|S|) Σ_{i∈S} H_iᵀ ∇φ_i` over the samples in `subset`.
fn subset_gradient(spec: &MlpSpec, dataset: &Dataset, w: &WeightVector, subset: &[usize]) -> Result<(f64, DVector<f64>)> {
    let mut value = 0.0;
    let mut grad = DVector::zeros(spec.param_count());
    for &i in subset {
        let (z, h) = network::forward_and_jacobian(spec, w, &dataset.inputs[i])?;
        let loss = &dataset.losses[i];
        value += loss.value(&z)?;
        grad.gemv_tr(1.0, &h, &loss.grad(&z)?, 1.0);
    }
    let k = subset.len() as f64;
    Ok((value / k, grad / k))
}

pub fn run_baseline_on(spec: &MlpSpec, dataset: &Dataset, w0: &WeightVector, baseline: &Baseline) -> Result<BaselineRun> {
    baseline.validate()?;
    check_dim("initial weights", spec.param_count(), w0.len())?;
    let n = dataset.len();
    let all: Vec<usize> = (0..n).collect();
    let optimal = dataset.losses.iter().map(|l| l.meta().optimal_value).sum::<f64>() / n as f64;
    let mut rng = match baseline {
        Baseline::StochasticGd { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        Baseline::FullGradientDescent { .. } => None,
    };
    let step = baseline.step();
    let mut w = w0.clone();
    let mut records = Vec::with_capacity(baseline.iters());
    let mut diverged = false;

    for t in 0..baseline.iters() {
        let objective_f = crate::trainer::objective(spec, dataset, &w)?;
        if !objective_f.is_finite() || objective_f > DIVERGENCE_LIMIT {
            diverged = true;
            break;
        }
        let grad = match (&mut rng, baseline) {
            (Some(rng), Baseline::StochasticGd { batch, .. }) => {
                let mut idx = sample(rng, n, (*batch).min(n)).into_vec();
                idx.sort_unstable();
                subset_gradient(spec, dataset, &w, &idx)?.1
            }
            _ => subset_gradient(spec, dataset, &w, &all)?.1,
        };
        records.push(IterationRecord {
            t,
            objective_f,
            gap_upper: objective_f - optimal,
            residual_phi: None,
            v_norm_sq: grad.norm_squared(),
            inner_iters: 0,
            alpha_t: step,
            assumption_snapshot: AssumptionEstimates::default(),
        });
        w = w.step(step, &grad);
    }

    let final_objective = crate::trainer::objective(spec, dataset, &w)?;
    if !final_objective.is_finite() || final_objective > DIVERGENCE_LIMIT {
        diverged = true;
    }
    Ok(BaselineRun {
        records,
        weights: w,
        final_gap: final_objective - optimal,
        diverged,
    })
}

/// Runs the baseline named in the config from the same initial weights the main
/// algorithm would use.
pub fn run_baseline(config: &ExperimentConfig) -> Result<BaselineRun> {
    let baseline = config
        .baseline
        .ok_or_else(|| Error::MissingKey("baseline".into()))?;
    let dataset = load_dataset(&config.dataset_source, config.loss, Some(config.network.output_dim()))?;
    let w0 = super::experiment::initial_weights(config);
    run_baseline_on(&config.network, &dataset, &w0, &baseline)
}
