//! Outer losses `φ_i : ℝ^c → ℝ`.
//!
//! Both losses are convex with 1-Lipschitz gradients, so `L_φ = 1` throughout.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Per-sample outer loss with its target bound in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    /// `½‖z − y‖²`.
    Squared { target: DVector<f64> },
    /// Softmax cross-entropy against the one-hot label `label ∈ [0, classes)`.
    CrossEntropy { label: usize, classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossMeta {
    /// Gradient Lipschitz constant `L_φ`.
    pub smoothness: f64,
    /// `inf_z φ(z)`.
    pub optimal_value: f64,
    /// Minimizer, when attained.
    pub optimal_point: Option<DVector<f64>>,
}

impl LossKind {
    pub fn squared(target: impl Into<DVector<f64>>) -> Self {
        LossKind::Squared {
            target: target.into(),
        }
    }

    pub fn cross_entropy(label: usize, classes: usize) -> Result<Self> {
        if classes == 0 || label >= classes {
            return Err(Error::InvalidLoss(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        Ok(LossKind::CrossEntropy { label, classes })
    }

    /// Output dimension `c`.
    pub fn dim(&self) -> usize {
        match self {
            LossKind::Squared { target } => target.len(),
            LossKind::CrossEntropy { classes, .. } => *classes,
        }
    }

    pub fn is_squared(&self) -> bool {
        matches!(self, LossKind::Squared { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossKind::Squared { target } => {
                if target.is_empty() || target.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidLoss("squared-loss target must be finite and non-empty".into()));
                }
            }
            LossKind::CrossEntropy { label, classes } => {
                if *classes == 0 || label >= classes {
                    return Err(Error::InvalidLoss(format!(
                        "label {label} out of range for {classes} classes"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, z: &DVector<f64>) -> Result<f64> {
        check_dim("loss input", self.dim(), z.len())?;
        Ok(match self {
            LossKind::Squared { target } => 0.5 * (z - target).norm_squared(),
            LossKind::CrossEntropy { label, .. } => {
                let za = z[*label];
                // shifts are ≥ 0 at k = label, so the max guard is ≥ 0
                let shift = z.iter().map(|&zk| zk - za).fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|&zk| (zk - za - shift).exp()).sum();
                shift + sum.ln()
            }
        })
    }

    pub fn grad(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("loss input", self.dim(), z.len())?;
        Ok(match self {
            LossKind::Squared { target } => z - target,
            LossKind::CrossEntropy { label, .. } => {
                let a = *label;
                let za = z[a];
                let shift = z.iter().map(|&zk| zk - za).fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = z.iter().map(|&zk| (zk - za - shift).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut g = DVector::zeros(z.len());
                let mut off_label = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    if k != a {
                        g[k] = w / total;
                        off_label += g[k];
                    }
                }
                g[a] = -off_label;
                g
            }
        })
    }

    pub fn meta(&self) -> LossMeta {
        match self {
            LossKind::Squared { target } => LossMeta {
                smoothness: 1.0,
                optimal_value: 0.0,
                optimal_point: Some(target.clone()),
            },
            LossKind::CrossEntropy { .. } => LossMeta {
                smoothness: 1.0,
                optimal_value: 0.0,
                optimal_point: None,
            },
        }
    }
}

pub fn loss_value(kind: &LossKind, z: &DVector<f64>) -> Result<f64> {
    kind.value(z)
}

pub fn loss_grad(kind: &LossKind, z: &DVector<f64>) -> Result<DVector<f64>> {
    kind.grad(z)
}

pub fn loss_meta(kind: &LossKind) -> LossMeta {
    kind.meta()
}
