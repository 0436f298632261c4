//! The per-step regularized direction problem
//!
//! ```text
//! Ψ(v) = Φ(v) + (ε²/2)‖v‖²,   Φ(v) = ½ (1/n) Σ ‖η H_i v − α_i g_i‖²
//! ```
//!
//! with `g_i = ∇φ_i(h(w; i))`. Its gradient is `A v − b` where
//! `A = (1/n) Σ η² H_iᵀH_i + ε² I` and `b = (1/n) Σ α_i η H_iᵀ g_i`, so the
//! unique minimizer solves an SPD system. [`solve_inner_gd`] approximates it and
//! certifies `‖v − v*‖ ≤ tol` through ε²-strong convexity:
//! `‖v − v*‖ ≤ ‖∇Ψ(v)‖ / ε²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Cholesky};
use crate::network::{JacobianStack, WeightVector};

/// Largest `d` for which the dense system is assembled.
pub const MAX_DENSE_DIM: usize = 4096;

const L_EST_POWER_STEPS: usize = 50;
const L_EST_INFLATION: f64 = 1.01;

#[derive(Debug, Clone)]
pub struct SubproblemInput {
    pub jacobians: JacobianStack,
    /// `g_i = ∇_z φ_i(h(w; i))`.
    pub grads: Vec<DVector<f64>>,
    pub eta: f64,
    pub alphas: Vec<f64>,
    /// Regularization weight `ε²`.
    pub reg: f64,
}

impl SubproblemInput {
    pub fn new(jacobians: JacobianStack, grads: Vec<DVector<f64>>, eta: f64, alphas: Vec<f64>, reg: f64) -> Result<Self> {
        let input = Self {
            jacobians,
            grads,
            eta,
            alphas,
            reg,
        };
        input.validate()?;
        Ok(input)
    }

    /// Builds an input from bare Jacobians (no associated weight vector).
    pub fn from_parts(jacobians: Vec<DMatrix<f64>>, grads: Vec<DVector<f64>>, eta: f64, alphas: Vec<f64>, reg: f64) -> Result<Self> {
        Self::new(
            JacobianStack {
                per_sample: jacobians,
                eval_point: WeightVector::zeros(0),
            },
            grads,
            eta,
            alphas,
            reg,
        )
    }

    pub fn n(&self) -> usize {
        self.grads.len()
    }

    pub fn dim(&self) -> usize {
        self.jacobians.per_sample.first().map_or(0, |h| h.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grads.len();
        if n == 0 {
            return Err(Error::InvalidConfig("subproblem needs at least one sample".into()));
        }
        check_dim("jacobian count", n, self.jacobians.len())?;
        check_dim("alpha count", n, self.alphas.len())?;
        let d = self.dim();
        for (h, g) in self.jacobians.per_sample.iter().zip(&self.grads) {
            check_dim("jacobian rows", g.len(), h.nrows())?;
            check_dim("jacobian columns", d, h.ncols())?;
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.reg > 0.0 && self.reg.is_finite()) {
            return Err(Error::InvalidConfig(format!("regularization must be positive, got {}", self.reg)));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// `A v = b` with `A` stored as a full symmetric matrix.
#[derive(Debug, Clone)]
pub struct SubproblemSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub reg: f64,
}

impl SubproblemSystem {
    pub fn dim(&self) -> usize {
        self.b.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveCertificate {
    /// `‖∇Ψ(v)‖`.
    pub grad_norm: f64,
    /// `grad_norm / ε²`, an upper bound on `‖v − v*‖`.
    pub distance_bound: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub satisfied: bool,
}

/// How the inner gradient-descent step `1/L` is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `L` = power-iteration estimate of `λ_max(A)`, inflated by 1%.
    #[default]
    PowerIteration,
    /// `L = η² max_i ‖H_i‖² + ε²`, i.e. `D²H² + ε²` when `η = D√ε` and `‖H_i‖ ≤ H/√ε`.
    Analytic,
}

#[derive(Debug, Clone, Default)]
pub struct InnerGdOptions {
    pub step_rule: StepRule,
    /// Start point; `None` starts from zero. Warm starts are not covered by the
    /// per-iteration analysis.
    pub warm_start: Option<DVector<f64>>,
}

pub fn assemble(input: &SubproblemInput) -> Result<SubproblemSystem> {
    input.validate()?;
    let d = input.dim();
    if d > MAX_DENSE_DIM {
        return Err(Error::TooLarge { d, limit: MAX_DENSE_DIM });
    }
    let n = input.n() as f64;
    let eta = input.eta;
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for (i, ((h, g), alpha)) in input
        .jacobians
        .per_sample
        .iter()
        .zip(&input.grads)
        .zip(&input.alphas)
        .enumerate()
    {
        if h.iter().chain(g.iter()).any(|x| !x.is_finite()) {
            return Err(Error::AssemblyFailure { sample: i });
        }
        a.gemm_tr(eta * eta / n, h, h, 1.0);
        b.gemv_tr(alpha * eta / n, h, g, 1.0);
    }
    for j in 0..d {
        a[(j, j)] += input.reg;
        for i in 0..j {
            // keep exact symmetry regardless of the matmul kernel
            a[(i, j)] = a[(j, i)];
        }
    }
    Ok(SubproblemSystem { a, b, reg: input.reg })
}

/// `Φ(v) = ½ (1/n) Σ ‖η H_i v − α_i g_i‖²`.
pub fn phi_value(input: &SubproblemInput, v: &DVector<f64>) -> Result<f64> {
    check_dim("direction", input.dim(), v.len())?;
    let mut total = 0.0;
    for ((h, g), alpha) in input.jacobians.per_sample.iter().zip(&input.grads).zip(&input.alphas) {
        let r = h * v * input.eta - g * *alpha;
        total += r.norm_squared();
    }
    Ok(0.5 * total / input.n() as f64)
}

/// `Ψ(v) = Φ(v) + (ε²/2)‖v‖²`.
pub fn psi_value(input: &SubproblemInput, v: &DVector<f64>) -> Result<f64> {
    Ok(phi_value(input, v)? + 0.5 * input.reg * v.norm_squared())
}

/// `∇Ψ(v) = A v − b`.
pub fn psi_grad(system: &SubproblemSystem, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("direction", system.dim(), v.len())?;
    Ok(&system.a * v - &system.b)
}

/// Exact minimizer of `Ψ` by Cholesky factorization of `A`.
pub fn solve_closed_form(system: &SubproblemSystem) -> Result<DVector<f64>> {
    Cholesky::factor(&system.a)?.solve(&system.b)
}

/// Estimated smoothness constant of `Ψ` for the given rule.
pub fn smoothness_estimate(input: &SubproblemInput, system: &SubproblemSystem, rule: StepRule) -> f64 {
    match rule {
        StepRule::PowerIteration => linalg::sym_spectral_norm(&system.a, L_EST_POWER_STEPS, 0x5eed) * L_EST_INFLATION,
        StepRule::Analytic => {
            let max_h = input
                .jacobians
                .per_sample
                .iter()
                .enumerate()
                .map(|(i, h)| linalg::spectral_norm(h, L_EST_POWER_STEPS, i as u64))
                .fold(0.0f64, f64::max);
            (input.eta * input.eta * max_h * max_h + input.reg) * L_EST_INFLATION
        }
    }
}

/// Gradient descent `v ← v − (1/L)(A v − b)` until `‖A v − b‖ / ε² ≤ tol`.
///
/// On hitting `max_iters` the best iterate seen is returned with an
/// unsatisfied certificate.
pub fn solve_inner_gd(
    input: &SubproblemInput,
    system: &SubproblemSystem,
    tol: f64,
    max_iters: usize,
) -> Result<(DVector<f64>, SolveCertificate)> {
    solve_inner_gd_with(input, system, tol, max_iters, &InnerGdOptions::default())
}

pub fn solve_inner_gd_with(
    input: &SubproblemInput,
    system: &SubproblemSystem,
    tol: f64,
    max_iters: usize,
    opts: &InnerGdOptions,
) -> Result<(DVector<f64>, SolveCertificate)> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("inner tolerance must be positive, got {tol}")));
    }
    let d = system.dim();
    let mut v = match &opts.warm_start {
        Some(v0) => {
            check_dim("warm start", d, v0.len())?;
            v0.clone()
        }
        None => DVector::zeros(d),
    };
    let lipschitz = smoothness_estimate(input, system, opts.step_rule);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 / system.reg };
    let reg = system.reg;

    let mut grad = DVector::zeros(d);
    let mut best: Option<(f64, usize, DVector<f64>)> = None;
    for k in 0..=max_iters {
        grad.copy_from(&system.b);
        grad.gemv(1.0, &system.a, &v, -1.0);
        let gn = grad.norm();
        if !gn.is_finite() {
            break;
        }
        if gn / reg <= tol {
            let cert = SolveCertificate {
                grad_norm: gn,
                distance_bound: gn / reg,
                iterations: k,
                step_size: step,
                satisfied: true,
            };
            return Ok((v, cert));
        }
        if best.as_ref().is_none_or(|(b, _, _)| gn < *b) {
            best = Some((gn, k, v.clone()));
        }
        if k == max_iters {
            break;
        }
        v.axpy(-step, &grad, 1.0);
    }
    let (gn, _, v_best) = best.unwrap_or_else(|| (f64::INFINITY, 0, v.clone()));
    Ok((
        v_best,
        SolveCertificate {
            grad_norm: gn,
            distance_bound: gn / reg,
            iterations: max_iters,
            step_size: step,
            satisfied: false,
        },
    ))
}

/// Diagnostic for the regularized-solution bounds: returns `Φ(v_reg)`,
/// `‖v_reg‖²` and the smallest `V` consistent with both
/// `‖v_reg‖² ≤ 2 + V` and `Φ(v_reg) ≤ (1 + V/2) ε²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionBound {
    pub phi_at_vreg: f64,
    pub norm_sq: f64,
    pub v_implied: f64,
}

pub fn check_direction_bound(input: &SubproblemInput, v_reg: &DVector<f64>, eps: f64) -> Result<DirectionBound> {
    let phi = phi_value(input, v_reg)?;
    let norm_sq = v_reg.norm_squared();
    let v_implied = (norm_sq - 2.0).max(2.0 * phi / (eps * eps) - 2.0).max(0.0);
    Ok(DirectionBound {
        phi_at_vreg: phi,
        norm_sq,
        v_implied,
    })
}
