//! Composite finite-sum training.
//!
//! The training objective is written as `F(w) = (1/n) Σ φ_i(h(w; i))`: a convex
//! outer loss `φ_i` composed with a (non-convex) network `h`. Each outer step
//! solves an ε²-regularized least-squares problem for a search direction `v`
//! so that `η H_i v ≈ α_i ∇φ_i(h(w; i))` for every sample simultaneously, then
//! moves `w ← w − η v`.
//!
//! Modules:
//! - [`losses`]: squared and softmax cross-entropy outer losses.
//! - [`network`]: smooth MLP classifier, per-sample Jacobians, assumption-constant estimates.
//! - [`subproblem`]: assembly and solution (closed form or certified gradient descent)
//!   of the regularized direction problem.
//! - [`trainer`]: the outer loop, learning-rate schedule and bound audit.
//! - [`harness`]: datasets, experiment configuration, baselines, feasibility and scaling experiments
//!   and metric output.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod network;
pub mod parallel;
pub mod subproblem;
pub mod trainer;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use losses::{LossKind, LossMeta};
pub use network::{Activation, AssumptionEstimates, JacobianStack, LayerParams, MlpSpec, WeightVector};
pub use subproblem::{SolveCertificate, StepRule, SubproblemInput, SubproblemSystem};
pub use trainer::{Algorithm, IterationRecord, TheoremAudit, TrainConfig, TrainOutcome, Termination};

pub use nalgebra::{DMatrix, DVector};
