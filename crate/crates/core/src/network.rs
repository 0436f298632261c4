//! Fully-connected classifier `h(w; x)` with smooth activations.
//!
//! Layer `l` maps `z ↦ σ_l(W⁽ˡ⁾ᵀ z + b⁽ˡ⁾)` with `W⁽ˡ⁾ ∈ ℝ^{n_{l−1} × n_l}`; the last
//! layer has no activation. Parameters are flattened layer by layer: `W⁽ˡ⁾` in
//! column-major order (all of column 1, then column 2, …) followed by `b⁽ˡ⁾`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Softplus,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Softplus,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Softplus => sigmoid(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::InvalidSpec(format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Architecture and initialization of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// `[m, n_1, …, n_{L−1}, c]`.
    pub layer_sizes: Vec<usize>,
    /// One activation per hidden layer (`L − 1` entries).
    pub activations: Vec<Activation>,
    /// When false every layer is bias-free (the small linear nets used in the
    /// initialization experiments).
    pub bias: bool,
    pub seed: u64,
    pub init_scale: f64,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>, seed: u64, init_scale: f64) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activations,
            bias: true,
            seed,
            init_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same architecture with all biases removed.
    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec("need at least an input and an output size".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidSpec("layer sizes must be ≥ 1".into()));
        }
        if self.activations.len() != self.num_layers() - 1 {
            return Err(Error::InvalidSpec(format!(
                "{} layers need {} hidden activations, got {}",
                self.num_layers(),
                self.num_layers() - 1,
                self.activations.len()
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidSpec("init_scale must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Number of affine layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// `d = Σ_l (n_{l−1} n_l + n_l)` (without the `n_l` term when bias-free).
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + if self.bias { w[1] } else { 0 })
            .sum()
    }

    fn layer_layout(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = offset;
                offset += fan_in * fan_out;
                let bias = if self.bias {
                    let b = offset;
                    offset += fan_out;
                    Some(b)
                } else {
                    None
                };
                LayerLayout {
                    fan_in,
                    fan_out,
                    weights,
                    bias,
                }
            })
            .collect()
    }

    /// Seeded Gaussian initialization: weights `N(0, (init_scale/√fan_in)²)`, biases zero.
    pub fn init_weights(&self) -> WeightVector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut data = DVector::zeros(self.param_count());
        for layer in self.layer_layout() {
            let std = self.init_scale / (layer.fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std.max(0.0)).expect("finite std");
            for k in 0..layer.fan_in * layer.fan_out {
                data[layer.weights + k] = if std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            }
        }
        WeightVector::new(data)
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: Option<usize>,
}

/// Flattened parameters `w ∈ ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub data: DVector<f64>,
}

impl WeightVector {
    pub fn new(data: DVector<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(DVector::zeros(d))
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(&self.data * factor)
    }

    /// `w − step · v`.
    pub fn step(&self, step: f64, v: &DVector<f64>) -> Self {
        Self::new(&self.data - v * step)
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(v: Vec<f64>) -> Self {
        Self::new(DVector::from_vec(v))
    }
}

/// Structured parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `n_{l−1} × n_l`.
    pub weights: DMatrix<f64>,
    pub bias: Option<DVector<f64>>,
}

pub fn vectorize(params: &[LayerParams]) -> WeightVector {
    let mut data = Vec::new();
    for layer in params {
        // nalgebra storage is column-major already
        data.extend_from_slice(layer.weights.as_slice());
        if let Some(b) = &layer.bias {
            data.extend_from_slice(b.as_slice());
        }
    }
    WeightVector::from(data)
}

pub fn devectorize(spec: &MlpSpec, w: &WeightVector) -> Result<Vec<LayerParams>> {
    check_dim("weight vector", spec.param_count(), w.len())?;
    let s = w.as_slice();
    Ok(spec
        .layer_layout()
        .into_iter()
        .map(|l| LayerParams {
            weights: DMatrix::from_column_slice(l.fan_in, l.fan_out, &s[l.weights..l.weights + l.fan_in * l.fan_out]),
            bias: l.bias.map(|b| DVector::from_column_slice(&s[b..b + l.fan_out])),
        })
        .collect())
}

/// Per-sample Jacobians `H_i ∈ ℝ^{c×d}` evaluated at `eval_point`.
#[derive(Debug, Clone)]
pub struct JacobianStack {
    pub per_sample: Vec<DMatrix<f64>>,
    pub eval_point: WeightVector,
}

impl JacobianStack {
    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }
}

/// Estimated assumption constants. These are sampled maxima, not certified bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionEstimates {
    /// `G`: bound on the spectral norm of every output Hessian `∇²h_j(w; i)`.
    pub hessian_bound_g: f64,
    /// `H` in the convention `‖H_i‖ ≤ H / √ε`.
    pub jacobian_bound_h: f64,
    /// `V`: squared-norm bound of a near-interpolating direction.
    pub direction_bound_v: f64,
}

impl AssumptionEstimates {
    /// Componentwise maximum.
    pub fn merge(&self, other: &AssumptionEstimates) -> AssumptionEstimates {
        AssumptionEstimates {
            hessian_bound_g: self.hessian_bound_g.max(other.hessian_bound_g),
            jacobian_bound_h: self.jacobian_bound_h.max(other.jacobian_bound_h),
            direction_bound_v: self.direction_bound_v.max(other.direction_bound_v),
        }
    }

    pub fn with_direction_bound(mut self, v: f64) -> Self {
        self.direction_bound_v = self.direction_bound_v.max(v);
        self
    }

    pub fn is_valid(&self) -> bool {
        [self.hessian_bound_g, self.jacobian_bound_h, self.direction_bound_v]
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0)
    }
}

/// Activations cached by a forward pass.
struct ForwardCache {
    /// `z⁽⁰⁾ = x, z⁽¹⁾, …, z⁽ᴸ⁾ = h`.
    outputs: Vec<DVector<f64>>,
    /// Pre-activations `a⁽¹⁾, …, a⁽ᴸ⁾`.
    pre: Vec<DVector<f64>>,
}

fn check_inputs(spec: &MlpSpec, w: &WeightVector, x: &DVector<f64>) -> Result<()> {
    check_dim("weight vector", spec.param_count(), w.len())?;
    check_dim("network input", spec.input_dim(), x.len())?;
    if let Some(idx) = w.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteWeights(idx));
    }
    Ok(())
}

fn forward_cached(spec: &MlpSpec, layout: &[LayerLayout], w: &[f64], x: &DVector<f64>) -> ForwardCache {
    let mut outputs = Vec::with_capacity(layout.len() + 1);
    let mut pre = Vec::with_capacity(layout.len());
    outputs.push(x.clone());
    for (l, layer) in layout.iter().enumerate() {
        let wm = DMatrixView::from_slice(&w[layer.weights..layer.weights + layer.fan_in * layer.fan_out], layer.fan_in, layer.fan_out);
        let mut a = wm.tr_mul(&outputs[l]);
        if let Some(b) = layer.bias {
            for q in 0..layer.fan_out {
                a[q] += w[b + q];
            }
        }
        let z = match spec.activations.get(l) {
            Some(act) => a.map(|v| act.apply(v)),
            None => a.clone(),
        };
        pre.push(a);
        outputs.push(z);
    }
    ForwardCache { outputs, pre }
}

/// Gradient of output `k` with respect to all parameters, written into `row`.
fn backward_row(spec: &MlpSpec, layout: &[LayerLayout], w: &[f64], cache: &ForwardCache, k: usize, row: &mut [f64]) {
    let last = layout.len() - 1;
    let mut delta = DVector::zeros(layout[last].fan_out);
    delta[k] = 1.0;
    for l in (0..layout.len()).rev() {
        let layer = layout[l];
        let input = &cache.outputs[l];
        for q in 0..layer.fan_out {
            let dq = delta[q];
            let col = layer.weights + q * layer.fan_in;
            for p in 0..layer.fan_in {
                row[col + p] = input[p] * dq;
            }
        }
        if let Some(b) = layer.bias {
            row[b..b + layer.fan_out].copy_from_slice(delta.as_slice());
        }
        if l > 0 {
            let wm = DMatrixView::from_slice(&w[layer.weights..layer.weights + layer.fan_in * layer.fan_out], layer.fan_in, layer.fan_out);
            let mut next = wm * &delta;
            let act = spec.activations[l - 1];
            for (p, a) in cache.pre[l - 1].iter().enumerate() {
                next[p] *= act.derivative(*a);
            }
            delta = next;
        }
    }
}

pub fn forward(spec: &MlpSpec, w: &WeightVector, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_inputs(spec, w, x)?;
    let layout = spec.layer_layout();
    let mut cache = forward_cached(spec, &layout, w.as_slice(), x);
    Ok(cache.outputs.pop().unwrap())
}

/// Analytic Jacobian `∂h/∂w ∈ ℝ^{c×d}` by one reverse pass per output.
pub fn jacobian(spec: &MlpSpec, w: &WeightVector, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    forward_and_jacobian(spec, w, x).map(|(_, j)| j)
}

pub fn forward_and_jacobian(spec: &MlpSpec, w: &WeightVector, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_inputs(spec, w, x)?;
    let layout = spec.layer_layout();
    let cache = forward_cached(spec, &layout, w.as_slice(), x);
    let c = spec.output_dim();
    let d = spec.param_count();
    // build row-major then transpose into nalgebra's column-major storage
    let mut rows = vec![0.0; c * d];
    for (k, row) in rows.chunks_mut(d).enumerate() {
        backward_row(spec, &layout, w.as_slice(), &cache, k, row);
    }
    let jac = DMatrix::from_row_slice(c, d, &rows);
    Ok((cache.outputs.last().unwrap().clone(), jac))
}

/// Outputs and Jacobians for every input, in input order.
pub fn forward_and_jacobian_all(
    spec: &MlpSpec,
    w: &WeightVector,
    inputs: &[DVector<f64>],
) -> Result<(Vec<DVector<f64>>, JacobianStack)> {
    let pairs: Vec<(DVector<f64>, DMatrix<f64>)> = inputs
        .par_iter()
        .map(|x| forward_and_jacobian(spec, w, x))
        .collect::<Result<_>>()?;
    let (outputs, per_sample) = pairs.into_iter().unzip();
    Ok((
        outputs,
        JacobianStack {
            per_sample,
            eval_point: w.clone(),
        },
    ))
}

pub fn jacobian_stack(spec: &MlpSpec, w: &WeightVector, inputs: &[DVector<f64>]) -> Result<JacobianStack> {
    forward_and_jacobian_all(spec, w, inputs).map(|(_, s)| s)
}

/// Linearization error `ε = h(w − ηv) − h(w) + η H v`.
pub fn taylor_residual(spec: &MlpSpec, w: &WeightVector, v: &DVector<f64>, eta: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("direction", spec.param_count(), v.len())?;
    let (h0, jac) = forward_and_jacobian(spec, w, x)?;
    let h1 = forward(spec, &w.step(eta, v), x)?;
    Ok(h1 - h0 + jac * v * eta)
}

/// Knobs for [`estimate_constants_with`].
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub power_iterations: usize,
    pub max_probes: usize,
    pub max_pairs: usize,
    /// Step of the central difference used for Hessian-vector products.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            power_iterations: 30,
            max_probes: 8,
            max_pairs: 64,
            fd_step: 1e-4,
            seed: 0,
        }
    }
}

/// Evenly spaced subset of `0..len` of size at most `cap`, always keeping the ends.
pub(crate) fn spread_indices(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap {
        return (0..len).collect();
    }
    if cap <= 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..cap)
        .map(|k| ((k as f64) * (len - 1) as f64 / (cap - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Central-difference Hessian-vector product
/// `(∇h_j(w + δu) − ∇h_j(w − δu)) / 2δ` for output `j`.
pub fn hessian_vector_product(
    spec: &MlpSpec,
    w: &WeightVector,
    x: &DVector<f64>,
    output: usize,
    u: &DVector<f64>,
    fd_step: f64,
) -> Result<DVector<f64>> {
    check_inputs(spec, w, x)?;
    check_dim("hessian direction", spec.param_count(), u.len())?;
    let mut probe = HvpProbe::new(spec, w, x, output)?;
    let mut out = DVector::zeros(u.len());
    probe.apply(u, &mut out, fd_step);
    Ok(out)
}

struct HvpProbe<'a> {
    spec: &'a MlpSpec,
    layout: Vec<LayerLayout>,
    base: &'a [f64],
    x: &'a DVector<f64>,
    output: usize,
    shifted: Vec<f64>,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl<'a> HvpProbe<'a> {
    fn new(spec: &'a MlpSpec, w: &'a WeightVector, x: &'a DVector<f64>, output: usize) -> Result<Self> {
        if output >= spec.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "output index",
                expected: spec.output_dim(),
                actual: output,
            });
        }
        let d = spec.param_count();
        Ok(Self {
            spec,
            layout: spec.layer_layout(),
            base: w.as_slice(),
            x,
            output,
            shifted: vec![0.0; d],
            plus: vec![0.0; d],
            minus: vec![0.0; d],
        })
    }

    fn gradient_at(&mut self, u: &DVector<f64>, delta: f64, plus: bool) {
        for (s, (b, ui)) in self.shifted.iter_mut().zip(self.base.iter().zip(u.iter())) {
            *s = b + delta * ui;
        }
        let cache = forward_cached(self.spec, &self.layout, &self.shifted, self.x);
        let row = if plus { &mut self.plus } else { &mut self.minus };
        backward_row(self.spec, &self.layout, &self.shifted, &cache, self.output, row);
    }

    fn apply(&mut self, u: &DVector<f64>, out: &mut DVector<f64>, delta: f64) {
        self.gradient_at(u, delta, true);
        self.gradient_at(u, -delta, false);
        for ((o, p), m) in out.iter_mut().zip(&self.plus).zip(&self.minus) {
            *o = (p - m) / (2.0 * delta);
        }
    }
}

/// Spectral norm of `∇²h_j(w; x)` from `power_iterations` applications of the
/// matrix-free central-difference Hessian operator, spent on a Lanczos
/// recurrence rather than plain power steps.
pub fn hessian_norm(spec: &MlpSpec, w: &WeightVector, x: &DVector<f64>, output: usize, opts: &EstimateOptions) -> Result<f64> {
    check_inputs(spec, w, x)?;
    let mut probe = HvpProbe::new(spec, w, x, output)?;
    let start = linalg::seeded_unit_vector(spec.param_count(), opts.seed ^ (output as u64).wrapping_mul(0x9E37_79B9));
    Ok(linalg::lanczos_norm(&start, opts.power_iterations, |u, out| {
        probe.apply(u, out, opts.fd_step)
    }))
}

/// `√ε · max_i ‖H_i‖₂`.
pub fn jacobian_bound(stack: &JacobianStack, eps: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for (i, h) in stack.per_sample.iter().enumerate() {
        let norm = linalg::spectral_norm(h, 50, i as u64);
        if !norm.is_finite() {
            return Err(Error::EstimationFailure { sample: i });
        }
        best = best.max(norm);
    }
    Ok(eps.sqrt() * best)
}

/// Maximum output-Hessian norm over probe weights and (sample, output) pairs.
pub fn hessian_bound(spec: &MlpSpec, w_samples: &[WeightVector], inputs: &[DVector<f64>], opts: &EstimateOptions) -> Result<f64> {
    let c = spec.output_dim();
    let pairs: Vec<(usize, usize)> = spread_indices(inputs.len() * c, opts.max_pairs)
        .into_iter()
        .map(|k| (k / c, k % c))
        .collect();
    let mut best = 0.0f64;
    for probe in spread_indices(w_samples.len(), opts.max_probes) {
        let w = &w_samples[probe];
        let norms: Vec<(usize, Result<f64>)> = pairs
            .par_iter()
            .map(|&(i, j)| (i, hessian_norm(spec, w, &inputs[i], j, opts)))
            .collect();
        for (i, norm) in norms {
            let norm = norm?;
            if !norm.is_finite() {
                return Err(Error::EstimationFailure { sample: i });
            }
            best = best.max(norm);
        }
    }
    Ok(best)
}

/// Estimates `G` and `H` over the given probe weights. `V` is left at zero; it
/// comes from the direction-bound diagnostic and is merged with
/// [`AssumptionEstimates::with_direction_bound`].
pub fn estimate_constants(spec: &MlpSpec, w_samples: &[WeightVector], inputs: &[DVector<f64>], eps: f64) -> Result<AssumptionEstimates> {
    estimate_constants_with(spec, w_samples, inputs, eps, &EstimateOptions::default())
}

pub fn estimate_constants_with(
    spec: &MlpSpec,
    w_samples: &[WeightVector],
    inputs: &[DVector<f64>],
    eps: f64,
    opts: &EstimateOptions,
) -> Result<AssumptionEstimates> {
    if w_samples.is_empty() {
        return Err(Error::InvalidConfig("estimate_constants needs at least one probe weight".into()));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig("eps must be positive".into()));
    }
    let g = hessian_bound(spec, w_samples, inputs, opts)?;
    let mut h = 0.0f64;
    for probe in spread_indices(w_samples.len(), opts.max_probes) {
        let stack = jacobian_stack(spec, &w_samples[probe], inputs)?;
        h = h.max(jacobian_bound(&stack, eps)?);
    }
    Ok(AssumptionEstimates {
        hessian_bound_g: g,
        jacobian_bound_h: h,
        direction_bound_v: 0.0,
    })
}
