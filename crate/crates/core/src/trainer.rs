//! Outer loop: `w⁽ᵗ⁺¹⁾ = w⁽ᵗ⁾ − η v⁽ᵗ⁾` with `v⁽ᵗ⁾` from the regularized
//! direction problem, solved exactly or by certified gradient descent.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::network::{self, spread_indices, AssumptionEstimates, EstimateOptions, MlpSpec, WeightVector};
use crate::subproblem::{self, InnerGdOptions, SolveCertificate, StepRule, SubproblemInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Exact Cholesky solve of the regularized problem each step.
    ClosedForm,
    /// Inner gradient descent to a certified tolerance.
    InnerGd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Tolerance `ε`; also sets the regularization `ε²`.
    pub eps: f64,
    /// Horizon scale: `T = ⌊β/ε⌋`.
    pub beta: f64,
    /// Step scale `D` in `η = D√ε`.
    pub step_scale: f64,
    /// Schedule scale `α`.
    pub alpha: f64,
    pub algorithm: Algorithm,
    /// Inner tolerance; `None` means `ε`.
    pub inner_tol: Option<f64>,
    pub inner_max_iters: usize,
    pub seed: u64,
    pub step_rule: StepRule,
    /// Start the inner solver from the previous direction instead of zero.
    pub warm_start: bool,
    /// Number of trajectory points at which the Hessian bound is probed.
    pub hessian_probes: usize,
}

impl TrainConfig {
    pub fn new(eps: f64, beta: f64, step_scale: f64, alpha: f64, algorithm: Algorithm, seed: u64) -> Self {
        Self {
            eps,
            beta,
            step_scale,
            alpha,
            algorithm,
            inner_tol: None,
            inner_max_iters: 1_000_000,
            seed,
            step_rule: StepRule::PowerIteration,
            warm_start: false,
            hessian_probes: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("eps", self.eps)?;
        positive("beta", self.beta)?;
        positive("D", self.step_scale)?;
        positive("alpha", self.alpha)?;
        let upper = self.alpha_upper_bound();
        if self.alpha >= upper {
            return Err(Error::InvalidConfig(format!(
                "alpha = {} must lie in (0, {upper:.4}) for {:?}",
                self.alpha, self.algorithm
            )));
        }
        if let Some(tol) = self.inner_tol {
            positive("inner_tol", tol)?;
        }
        Ok(())
    }

    fn alpha_upper_bound(&self) -> f64 {
        match self.algorithm {
            Algorithm::ClosedForm => 1.0 / 3.0,
            Algorithm::InnerGd => 1.0 / 4.0,
        }
    }

    /// Number of outer iterations `T = ⌊β/ε⌋` (a 1e-9 guard absorbs ratios like
    /// 2/0.05 that land just below an integer in floating point).
    pub fn horizon(&self) -> usize {
        (self.beta / self.eps + 1e-9).floor() as usize
    }

    /// `η = D√ε`.
    pub fn eta(&self) -> f64 {
        self.step_scale * self.eps.sqrt()
    }

    pub fn inner_tolerance(&self) -> f64 {
        self.inner_tol.unwrap_or(self.eps)
    }
}

/// `α⁽ᵗ⁾ = (1 + ε)ᵗ α / (e^β L_φ)`, defined for `0 ≤ t ≤ T`.
pub fn lr_schedule(config: &TrainConfig, t: usize, loss_smoothness: f64) -> Result<f64> {
    let horizon = config.horizon();
    if t > horizon {
        return Err(Error::ScheduleOverrun { t, horizon });
    }
    let alpha0 = config.alpha / (config.beta.exp() * loss_smoothness);
    Ok((1.0 + config.eps).powi(t as i32) * alpha0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub objective_f: f64,
    /// `F(w) − (1/n) Σ inf φ_i`, an upper bound on `F(w) − F_*`.
    pub gap_upper: f64,
    /// `Φ(v⁽ᵗ⁾)`; absent for baseline optimizers.
    pub residual_phi: Option<f64>,
    pub v_norm_sq: f64,
    pub inner_iters: usize,
    pub alpha_t: f64,
    /// Running maxima of the constant estimates along the trajectory so far.
    pub assumption_snapshot: AssumptionEstimates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// The inner solver hit its iteration cap at step `t`.
    CertificateFailed { t: usize, certificate: SolveCertificate },
    /// The objective or weights became non-finite at step `t`.
    NonFinite { t: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Last valid weights (`w⁽ᵀ⁾` on completion).
    pub weights: WeightVector,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Estimates over the whole trajectory (equal to the last snapshot).
    pub estimates: AssumptionEstimates,
    /// `gap_upper` at the returned weights.
    pub final_gap: f64,
    pub certificates: Vec<SolveCertificate>,
}

impl TrainOutcome {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }
}

/// `F(w) = (1/n) Σ φ_i(h(w; i))`.
pub fn objective(spec: &MlpSpec, dataset: &Dataset, w: &WeightVector) -> Result<f64> {
    let mut total = 0.0;
    for (x, loss) in dataset.inputs.iter().zip(&dataset.losses) {
        total += loss.value(&network::forward(spec, w, x)?)?;
    }
    Ok(total / dataset.len() as f64)
}

fn mean_optimal_value(dataset: &Dataset) -> f64 {
    dataset.losses.iter().map(|l| l.meta().optimal_value).sum::<f64>() / dataset.len() as f64
}

pub fn gap_upper(spec: &MlpSpec, dataset: &Dataset, w: &WeightVector) -> Result<f64> {
    Ok(objective(spec, dataset, w)? - mean_optimal_value(dataset))
}

/// `(1/n) Σ ‖h(w; i) − h_i*‖²`; `None` when some minimizer is not attained
/// (cross-entropy).
pub fn init_distance(spec: &MlpSpec, dataset: &Dataset, w: &WeightVector) -> Result<Option<f64>> {
    let mut total = 0.0;
    for (x, loss) in dataset.inputs.iter().zip(&dataset.losses) {
        let Some(target) = loss.meta().optimal_point else {
            return Ok(None);
        };
        total += (network::forward(spec, w, x)? - target).norm_squared();
    }
    Ok(Some(total / dataset.len() as f64))
}

fn check_compatible(spec: &MlpSpec, dataset: &Dataset, w: &WeightVector) -> Result<()> {
    spec.validate()?;
    check_dim("dataset inputs vs network", spec.input_dim(), dataset.input_dim())?;
    check_dim("dataset outputs vs network", spec.output_dim(), dataset.output_dim())?;
    check_dim("initial weights", spec.param_count(), w.len())
}

pub fn run(config: &TrainConfig, spec: &MlpSpec, dataset: &Dataset, w0: &WeightVector) -> Result<TrainOutcome> {
    config.validate()?;
    check_compatible(spec, dataset, w0)?;
    let horizon = config.horizon();
    let n = dataset.len();
    let eta = config.eta();
    let reg = config.eps * config.eps;
    let l_phi = dataset.loss_smoothness();
    let optimal = mean_optimal_value(dataset);
    let probe_steps = spread_indices(horizon, config.hessian_probes);
    let est_opts = EstimateOptions {
        seed: config.seed,
        ..EstimateOptions::default()
    };

    let mut w = w0.clone();
    let mut records = Vec::with_capacity(horizon);
    let mut certificates = Vec::new();
    let mut estimates = AssumptionEstimates::default();
    let mut previous_v: Option<DVector<f64>> = None;
    let mut termination = Termination::Completed;

    for t in 0..horizon {
        let (outputs, stack) = network::forward_and_jacobian_all(spec, &w, &dataset.inputs)?;
        let mut objective_f = 0.0;
        let mut grads = Vec::with_capacity(n);
        for (z, loss) in outputs.iter().zip(&dataset.losses) {
            objective_f += loss.value(z)?;
            grads.push(loss.grad(z)?);
        }
        objective_f /= n as f64;
        if !objective_f.is_finite() {
            termination = Termination::NonFinite { t };
            break;
        }

        let alpha_t = lr_schedule(config, t, l_phi)?;
        let input = SubproblemInput::new(stack, grads, eta, vec![alpha_t; n], reg)?;
        let system = subproblem::assemble(&input)?;
        let v_reg = subproblem::solve_closed_form(&system)?;

        let (v, inner_iters, certificate) = match config.algorithm {
            Algorithm::ClosedForm => (v_reg.clone(), 0, None),
            Algorithm::InnerGd => {
                let opts = InnerGdOptions {
                    step_rule: config.step_rule,
                    warm_start: if config.warm_start { previous_v.clone() } else { None },
                };
                let (v, cert) = subproblem::solve_inner_gd_with(&input, &system, config.inner_tolerance(), config.inner_max_iters, &opts)?;
                (v, cert.iterations, Some(cert))
            }
        };

        let bound = subproblem::check_direction_bound(&input, &v_reg, config.eps)?;
        let mut snapshot = AssumptionEstimates {
            hessian_bound_g: 0.0,
            jacobian_bound_h: network::jacobian_bound(&input.jacobians, config.eps)?,
            direction_bound_v: bound.v_implied,
        };
        if probe_steps.contains(&t) {
            snapshot.hessian_bound_g = network::hessian_bound(spec, std::slice::from_ref(&w), &dataset.inputs, &est_opts)?;
        }
        estimates = estimates.merge(&snapshot);

        records.push(IterationRecord {
            t,
            objective_f,
            gap_upper: objective_f - optimal,
            residual_phi: Some(subproblem::phi_value(&input, &v)?),
            v_norm_sq: v.norm_squared(),
            inner_iters,
            alpha_t,
            assumption_snapshot: estimates,
        });

        if let Some(cert) = certificate {
            certificates.push(cert);
            if !cert.satisfied {
                termination = Termination::CertificateFailed { t, certificate: cert };
                break;
            }
        }

        let next = w.step(eta, &v);
        if next.as_slice().iter().any(|x| !x.is_finite()) {
            termination = Termination::NonFinite { t };
            break;
        }
        w = next;
        previous_v = Some(v);
    }

    let final_gap = gap_upper(spec, dataset, &w)?;
    Ok(TrainOutcome {
        weights: w,
        records,
        termination,
        estimates,
        final_gap,
        certificates,
    })
}

/// Empirical average gap against the bound's right-hand side with estimated
/// constants substituted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremAudit {
    /// `(1/T) Σ gap_upper`.
    pub lhs_avg_gap: f64,
    pub rhs_bound: f64,
    /// Part of the bound driven by the initial output distance.
    pub rhs_init_term: f64,
    /// Part of the bound driven by `G`, `V`, `H`, `c`, `D`.
    pub rhs_constant_term: f64,
    pub satisfied: bool,
}

/// Right-hand side of the average-gap bound for the configured algorithm.
///
/// Closed form (α < 1/3):
/// `e^β L(1+ε)/(2(1−3α)αβ) · dist · ε + e^β L(3ε+2)/(8α(1−3α)) · [c(4+(V+2)GD²)² + 8 + 4V] · ε`.
///
/// Inner GD (α < 1/4):
/// `e^β L(1+ε)/(2(1−4α)αβ) · dist · ε + e^β L(4ε+3)/(2α(1−4α)) · [D²H² + c(2+(V+ε²+2)GD²)² + 2 + V] · ε`.
pub fn theorem_rhs(config: &TrainConfig, est: &AssumptionEstimates, init_distance: f64, classes: usize, loss_smoothness: f64) -> (f64, f64) {
    let eps = config.eps;
    let beta = config.beta;
    let a = config.alpha;
    let d2 = config.step_scale * config.step_scale;
    let c = classes as f64;
    let (g, v, h) = (est.hessian_bound_g, est.direction_bound_v, est.jacobian_bound_h);
    let lead = beta.exp() * loss_smoothness;
    match config.algorithm {
        Algorithm::ClosedForm => {
            let init = lead * (1.0 + eps) / (2.0 * (1.0 - 3.0 * a) * a * beta) * init_distance * eps;
            let inner = 4.0 + (v + 2.0) * g * d2;
            let rest = lead * (3.0 * eps + 2.0) / (8.0 * a * (1.0 - 3.0 * a)) * (c * inner * inner + 8.0 + 4.0 * v) * eps;
            (init, rest)
        }
        Algorithm::InnerGd => {
            let init = lead * (1.0 + eps) / (2.0 * (1.0 - 4.0 * a) * a * beta) * init_distance * eps;
            let inner = 2.0 + (v + eps * eps + 2.0) * g * d2;
            let rest = lead * (4.0 * eps + 3.0) / (2.0 * a * (1.0 - 4.0 * a)) * (d2 * h * h + c * inner * inner + 2.0 + v) * eps;
            (init, rest)
        }
    }
}

/// Constant `N` of the inner-GD complexity estimate with estimated constants
/// substituted:
/// `e^β L dist / ((1−4α)αβ) + 7 e^β L [D²H² + c(2+(V+3)GD²)² + 2 + V] / (2α(1−4α))`.
/// Only meaningful for [`Algorithm::InnerGd`]; the estimates make it a
/// diagnostic, not a certified complexity.
pub fn inner_gd_complexity_constant(config: &TrainConfig, est: &AssumptionEstimates, init_distance: f64, classes: usize, loss_smoothness: f64) -> f64 {
    let a = config.alpha;
    let d2 = config.step_scale * config.step_scale;
    let (g, v, h) = (est.hessian_bound_g, est.direction_bound_v, est.jacobian_bound_h);
    let lead = config.beta.exp() * loss_smoothness;
    let inner = 2.0 + (v + 3.0) * g * d2;
    lead * init_distance / ((1.0 - 4.0 * a) * a * config.beta)
        + 7.0 * lead * (d2 * h * h + classes as f64 * inner * inner + 2.0 + v) / (2.0 * a * (1.0 - 4.0 * a))
}

/// Compares the trajectory's average gap with the bound. Cross-entropy runs have
/// no attained minimizer, so `init_distance` is `None` and the audit is refused.
pub fn audit_theorem(
    config: &TrainConfig,
    records: &[IterationRecord],
    estimates: &AssumptionEstimates,
    init_distance: Option<f64>,
    classes: usize,
) -> Result<TheoremAudit> {
    let init_distance = init_distance
        .ok_or_else(|| Error::AuditUnavailable("initial output distance is undefined without attained loss minimizers".into()))?;
    let lhs = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.gap_upper).sum::<f64>() / records.len() as f64
    };
    let (init, rest) = theorem_rhs(config, estimates, init_distance, classes, 1.0);
    let rhs = init + rest;
    Ok(TheoremAudit {
        lhs_avg_gap: lhs,
        rhs_bound: rhs,
        rhs_init_term: init,
        rhs_constant_term: rest,
        satisfied: lhs <= rhs,
    })
}
