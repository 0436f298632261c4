//! Stacked interpolation system and the initialization-scaling experiment.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Result};
use crate::losses::LossKind;
use crate::network::{self, Activation, MlpSpec, WeightVector};

/// `A_stack v = b_stack` with rows `η H_i` and `α_i g_i` in sample order.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub a_stack: DMatrix<f64>,
    pub b_stack: DVector<f64>,
    pub numeric_rank: usize,
    /// `min_v ‖A_stack v − b_stack‖`.
    pub residual_min: f64,
    pub singular_values: Vec<f64>,
}

impl StackedSystem {
    pub fn full_row_rank(&self) -> bool {
        self.numeric_rank == self.a_stack.nrows()
    }
}

/// Rank and least-squares residual of a stacked system via SVD. Singular values
/// above `max(rows, cols) · σ_max · 1e−12` count toward the rank.
pub fn stacked_system(a_stack: DMatrix<f64>, b_stack: DVector<f64>) -> StackedSystem {
    let (rows, cols) = a_stack.shape();
    if rows == 0 || cols == 0 {
        return StackedSystem {
            residual_min: b_stack.norm(),
            a_stack,
            b_stack,
            numeric_rank: 0,
            singular_values: Vec::new(),
        };
    }
    let svd = a_stack.clone().svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let threshold = rows.max(cols) as f64 * sigma_max * 1e-12;
    let numeric_rank = sv.iter().filter(|&&s| s > threshold).count();
    let residual_min = if b_stack.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        match svd.solve(&b_stack, threshold) {
            Ok(v) => (&a_stack * v - &b_stack).norm(),
            Err(_) => b_stack.norm(),
        }
    };
    StackedSystem {
        a_stack,
        b_stack,
        numeric_rank,
        residual_min,
        singular_values: sv,
    }
}

pub fn interpolation_feasibility(
    spec: &MlpSpec,
    w: &WeightVector,
    dataset: &Dataset,
    eta: f64,
    alphas: &[f64],
) -> Result<StackedSystem> {
    check_dim("alpha count", dataset.len(), alphas.len())?;
    let (outputs, stack) = network::forward_and_jacobian_all(spec, w, &dataset.inputs)?;
    let c = spec.output_dim();
    let d = spec.param_count();
    let n = dataset.len();
    let mut a = DMatrix::zeros(n * c, d);
    let mut b = DVector::zeros(n * c);
    for (i, ((h, z), loss)) in stack.per_sample.iter().zip(&outputs).zip(&dataset.losses).enumerate() {
        a.view_mut((i * c, 0), (c, d)).copy_from(&(h * eta));
        b.rows_mut(i * c, c).copy_from(&(loss.grad(z)? * alphas[i]));
    }
    Ok(stacked_system(a, b))
}

/// Two-layer bias-free linear net `ℝ² → ℝ^hidden → ℝ²`.
pub fn two_point_linear_net(hidden: usize) -> MlpSpec {
    MlpSpec {
        layer_sizes: vec![2, hidden, 2],
        activations: vec![Activation::Identity],
        bias: false,
        seed: 0,
        init_scale: 1.0,
    }
}

/// Weights of [`two_point_linear_net`] with every hidden neuron sharing the base
/// weights: input weights `(w₁, w₂)` and output weights `(w₃, w₄)`.
pub fn replicated_weights(hidden: usize, base: [f64; 4]) -> WeightVector {
    let mut data = Vec::with_capacity(4 * hidden);
    // W⁽¹⁾ is 2×hidden, column j = weights into neuron j
    for _ in 0..hidden {
        data.extend_from_slice(&[base[0], base[1]]);
    }
    // W⁽²⁾ is hidden×2, column-major: all weights into output 1, then output 2
    data.extend(std::iter::repeat_n(base[2], hidden));
    data.extend(std::iter::repeat_n(base[3], hidden));
    WeightVector::from(data)
}

/// `Q(w)`: the per-sample Jacobians stacked in sample order.
pub fn q_matrix(spec: &MlpSpec, w: &WeightVector, inputs: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let stack = network::jacobian_stack(spec, w, inputs)?;
    let c = spec.output_dim();
    let d = spec.param_count();
    let mut q = DMatrix::zeros(inputs.len() * c, d);
    for (i, h) in stack.per_sample.iter().enumerate() {
        q.view_mut((i * c, 0), (c, d)).copy_from(h);
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QScaleRow {
    pub eps: f64,
    pub hidden: usize,
    pub q_norm: f64,
}

/// For each `ε`, builds the linear net with `⌈1/ε⌉` hidden neurons on the
/// two-point data and reports `‖Q(w⁰)‖₂`. Base weights come from `seed` and do
/// not depend on `ε`.
pub fn q_norm_scaling_experiment(eps_list: &[f64], seed: u64) -> Result<Vec<QScaleRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 4] = std::array::from_fn(|_| {
        let mag = rng.random_range(0.5..1.5);
        if rng.random::<bool>() { mag } else { -mag }
    });
    let inputs = [super::config::point([1.0, 0.0]), super::config::point([0.0, 1.0])];
    eps_list
        .iter()
        .map(|&eps| {
            let hidden = ((1.0 / eps) - 1e-9).ceil().max(1.0) as usize;
            let spec = two_point_linear_net(hidden);
            let w = replicated_weights(hidden, base);
            let q = q_matrix(&spec, &w, &inputs)?;
            Ok(QScaleRow {
                eps,
                hidden,
                q_norm: q.svd(false, false).singular_values.max(),
            })
        })
        .collect()
}

/// Squared-loss targets that make `w` an exact fit.
pub fn interpolating_targets(spec: &MlpSpec, w: &WeightVector, inputs: &[DVector<f64>]) -> Result<Vec<LossKind>> {
    inputs
        .iter()
        .map(|x| network::forward(spec, w, x).map(LossKind::squared))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_matrix_for_single_neuron_matches_explicit_form() {
        let spec = two_point_linear_net(1);
        let (w1, w2, w3, w4) = (0.8, -0.6, 1.1, 0.4);
        let w = WeightVector::from(vec![w1, w2, w3, w4]);
        let xs = [DVector::from_vec(vec![0.3, 0.9]), DVector::from_vec(vec![-1.2, 0.5])];
        let q = q_matrix(&spec, &w, &xs).unwrap();
        let z = |x: &DVector<f64>| w1 * x[0] + w2 * x[1];
        let (a, b) = (&xs[0], &xs[1]);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            w3 * a[0], w3 * a[1], z(a), 0.0,
            w4 * a[0], w4 * a[1], 0.0, z(a),
            w3 * b[0], w3 * b[1], z(b), 0.0,
            w4 * b[0], w4 * b[1], 0.0, z(b),
        ]);
        assert!((q - expected).amax() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_q() {
        let spec = two_point_linear_net(5);
        let inputs = [DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        let q = q_matrix(&spec, &WeightVector::zeros(20), &inputs).unwrap();
        assert_eq!(q.svd(false, false).singular_values.max(), 0.0);
    }

    #[test]
    fn q_norm_grows_like_inverse_sqrt_eps() {
        let rows = q_norm_scaling_experiment(&[0.1, 0.05, 0.025], 7).unwrap();
        assert_eq!(rows.iter().map(|r| r.hidden).collect::<Vec<_>>(), vec![10, 20, 40]);
        for pair in rows.windows(2) {
            let ratio = pair[1].q_norm / pair[0].q_norm;
            assert!((1.2..=1.7).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn duplicated_samples_lose_rank_and_zero_grads_fit() {
        let spec = MlpSpec::new(vec![2, 8, 2], vec![Activation::Sigmoid], 2, 1.0).unwrap();
        let w = spec.init_weights();
        let x = DVector::from_vec(vec![0.4, -0.7]);
        let losses = vec![LossKind::squared(DVector::from_vec(vec![1.0, 0.0])); 2];
        let dup = Dataset::new(vec![x.clone(), x.clone()], losses).unwrap();
        let sys = interpolation_feasibility(&spec, &w, &dup, 0.3, &[0.1, 0.1]).unwrap();
        assert!(sys.numeric_rank < 4);

        let targets = interpolating_targets(&spec, &w, &dup.inputs).unwrap();
        let fitted = Dataset::new(dup.inputs.clone(), targets).unwrap();
        let sys = interpolation_feasibility(&spec, &w, &fitted, 0.3, &[0.1, 0.1]).unwrap();
        assert_eq!(sys.residual_min, 0.0);
    }

    #[test]
    fn generic_overparameterized_net_has_full_row_rank() {
        let spec = MlpSpec::new(vec![3, 10, 2], vec![Activation::Tanh], 4, 1.0).unwrap();
        let w = spec.init_weights();
        let data = super::super::data::random_regression(3, 3, 2, 11).unwrap();
        let sys = interpolation_feasibility(&spec, &w, &data, 0.2, &[0.1; 3]).unwrap();
        assert_eq!(sys.numeric_rank, 6);
        assert!(sys.residual_min < 1e-8 * sys.b_stack.norm());
    }
}
