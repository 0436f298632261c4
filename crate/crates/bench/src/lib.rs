//! Shared fixtures for the benchmarks.

use composite_opt::harness::data::random_regression;
use composite_opt::network;
use composite_opt::subproblem::SubproblemInput;
use composite_opt::{Activation, Dataset, MlpSpec, WeightVector};

pub struct Fixture {
    pub spec: MlpSpec,
    pub dataset: Dataset,
    pub weights: WeightVector,
    pub eps: f64,
}

impl Fixture {
    /// Two tanh hidden layers of width `hidden` on `n` random regression samples
    /// in `ℝ⁸ → ℝ^c`.
    pub fn new(n: usize, c: usize, hidden: usize, eps: f64) -> Self {
        let spec = MlpSpec::new(vec![8, hidden, hidden, c], vec![Activation::Tanh, Activation::Tanh], 1, 1.0)
            .expect("valid fixture net");
        let dataset = random_regression(n, 8, c, 2).expect("valid fixture data");
        let weights = spec.init_weights();
        Self { spec, dataset, weights, eps }
    }

    pub fn dim(&self) -> usize {
        self.spec.param_count()
    }

    /// The direction problem at the fixture weights with `α_i = 0.1`.
    pub fn subproblem(&self) -> SubproblemInput {
        let (outputs, stack) = network::forward_and_jacobian_all(&self.spec, &self.weights, &self.dataset.inputs).unwrap();
        let grads = outputs
            .iter()
            .zip(&self.dataset.losses)
            .map(|(z, l)| l.grad(z).unwrap())
            .collect();
        let n = self.dataset.len();
        SubproblemInput::new(stack, grads, self.eps.sqrt(), vec![0.1; n], self.eps * self.eps).unwrap()
    }
}
