use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::losses::LossKind;

/// Training samples `x⁽ⁱ⁾ ∈ ℝ^m` with their outer losses attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<DVector<f64>>,
    pub losses: Vec<LossKind>,
}

impl Dataset {
    /// Checks shapes and that every sample uses the same loss family.
    pub fn new(inputs: Vec<DVector<f64>>, losses: Vec<LossKind>) -> Result<Self> {
        check_dim("loss count", inputs.len(), losses.len())?;
        if inputs.is_empty() {
            return Err(Error::InvalidConfig("dataset is empty".into()));
        }
        let m = inputs[0].len();
        let c = losses[0].dim();
        let squared = losses[0].is_squared();
        for (x, loss) in inputs.iter().zip(&losses) {
            check_dim("sample input", m, x.len())?;
            check_dim("sample output", c, loss.dim())?;
            loss.validate()?;
            if loss.is_squared() != squared {
                return Err(Error::InvalidLoss("mixed loss families are not supported".into()));
            }
        }
        Ok(Self { inputs, losses })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.losses[0].dim()
    }

    pub fn is_squared(&self) -> bool {
        self.losses[0].is_squared()
    }

    /// Shared `L_φ` of the attached losses.
    pub fn loss_smoothness(&self) -> f64 {
        self.losses[0].meta().smoothness
    }
}
