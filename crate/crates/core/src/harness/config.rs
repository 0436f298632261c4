//! TOML experiment configuration.
//!
//! ```toml
//! loss = "squared"
//! output = "out/desk"
//!
//! [network]
//! layers = [4, 12, 12, 2]
//! activations = ["tanh", "tanh"]
//! seed = 7
//!
//! [train]
//! eps = 0.05
//! beta = 2
//! d = 1
//! alpha = 0.2
//! seed = 1
//!
//! [data]
//! source = "random_regression"
//! n = 4
//! seed = 3
//! ```
//!
//! | key | default | notes |
//! |---|---|---|
//! | `network.layers` | required | `[m, n_1, …, c]` |
//! | `network.activations` | `[]` | one per hidden layer: `identity`, `sigmoid`, `tanh`, `softplus` |
//! | `network.bias` | `true` | |
//! | `network.init_scale` | `1.0` | std is `init_scale/√fan_in` |
//! | `network.init` | `gaussian` | `eps_scaled` divides the Gaussian draw by `√ε` |
//! | `network.seed` | required | |
//! | `loss` | required | `squared` or `cross_entropy` |
//! | `train.eps`, `train.beta`, `train.d`, `train.alpha` | required | |
//! | `train.algorithm` | `closed_form` | or `inner_gd` |
//! | `train.inner_tol` | `train.eps` | |
//! | `train.inner_max_iters` | `1000000` | |
//! | `train.step_rule` | `power_iteration` | or `analytic` |
//! | `train.warm_start` | `false` | |
//! | `train.hessian_probes` | `8` | |
//! | `train.seed` | required | |
//! | `data.source` | required | `csv`, `two_point`, `gaussian_blobs`, `random_regression` |
//! | `data.path` | | csv only |
//! | `data.n`, `data.seed` | | generated sources; `data.m`, `data.c` default to the network sizes |
//! | `data.x1`, `data.x2` | `[1, 0]` and `[0, 1]` | two_point only |
//! | `output` | `out` | output directory |
//! | `baseline.kind` | none | `gd` or `sgd`, with `step` and `iters`; `sgd` also needs `batch` and `seed` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Activation, MlpSpec};
use crate::subproblem::StepRule;
use crate::trainer::{Algorithm, TrainConfig};

use super::baseline::Baseline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Squared,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    CsvFile { path: PathBuf },
    TwoPoint { x1: [f64; 2], x2: [f64; 2] },
    GaussianBlobs { n: usize, m: usize, c: usize, seed: u64 },
    RandomRegression { n: usize, m: usize, c: usize, seed: u64 },
}

impl DatasetSource {
    pub fn two_point() -> Self {
        DatasetSource::TwoPoint {
            x1: [1.0, 0.0],
            x2: [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Gaussian,
    /// Gaussian draw scaled by `1/√ε`, so that `‖H_i⁽⁰⁾‖` grows like `1/√ε`
    /// on linear nets.
    EpsScaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub network: MlpSpec,
    pub init: InitMode,
    pub loss: LossFamily,
    pub train: TrainConfig,
    pub dataset_source: DatasetSource,
    pub output_path: PathBuf,
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<LossFamily>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    network: Option<RawNetwork>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<RawTrain>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<RawData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<Baseline>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    layers: Option<Vec<usize>>,
    #[serde(default)]
    activations: Vec<Activation>,
    bias: Option<bool>,
    init_scale: Option<f64>,
    init: Option<InitMode>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    eps: Option<f64>,
    beta: Option<f64>,
    d: Option<f64>,
    alpha: Option<f64>,
    algorithm: Option<Algorithm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inner_tol: Option<f64>,
    inner_max_iters: Option<usize>,
    step_rule: Option<StepRule>,
    warm_start: Option<bool>,
    hessian_probes: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x1: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x2: Option<[f64; 2]>,
}

fn required<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| Error::MissingKey(key.to_string()))
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    Error::Config {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    }
}

/// Every leaf of a TOML document as `dotted.key → value`, used as the config echo.
pub fn config_echo(text: &str) -> Result<BTreeMap<String, String>> {
    fn walk(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, String>) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                toml::Value::Table(t) => walk(&key, t, out),
                toml::Value::String(s) => {
                    out.insert(key, s.clone());
                }
                other => {
                    out.insert(key, other.to_string());
                }
            }
        }
    }
    let table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let mut out = BTreeMap::new();
    walk("", &table, &mut out);
    Ok(out)
}

impl ExperimentConfig {
    /// Reads a config file, returning it with its echo.
    pub fn from_file(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::parse(&text)?;
        Ok((cfg, config_echo(&text)?))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let net = required(raw.network, "network")?;
        let mut network = MlpSpec::new(
            required(net.layers, "network.layers")?,
            net.activations,
            required(net.seed, "network.seed")?,
            net.init_scale.unwrap_or(1.0),
        )?;
        network.bias = net.bias.unwrap_or(true);

        let loss = required(raw.loss, "loss")?;

        let t = required(raw.train, "train")?;
        let mut train = TrainConfig::new(
            required(t.eps, "train.eps")?,
            required(t.beta, "train.beta")?,
            required(t.d, "train.d")?,
            required(t.alpha, "train.alpha")?,
            t.algorithm.unwrap_or(Algorithm::ClosedForm),
            required(t.seed, "train.seed")?,
        );
        train.inner_tol = t.inner_tol;
        if let Some(iters) = t.inner_max_iters {
            train.inner_max_iters = iters;
        }
        train.step_rule = t.step_rule.unwrap_or_default();
        train.warm_start = t.warm_start.unwrap_or(false);
        if let Some(p) = t.hessian_probes {
            train.hessian_probes = p;
        }
        train.validate()?;

        let data = required(raw.data, "data")?;
        let m = data.m.unwrap_or(network.input_dim());
        let c = data.c.unwrap_or(network.output_dim());
        let dataset_source = match required(data.source, "data.source")?.as_str() {
            "csv" => DatasetSource::CsvFile {
                path: required(data.path, "data.path")?,
            },
            "two_point" => DatasetSource::TwoPoint {
                x1: data.x1.unwrap_or([1.0, 0.0]),
                x2: data.x2.unwrap_or([0.0, 1.0]),
            },
            "gaussian_blobs" => DatasetSource::GaussianBlobs {
                n: required(data.n, "data.n")?,
                m,
                c,
                seed: required(data.seed, "data.seed")?,
            },
            "random_regression" => DatasetSource::RandomRegression {
                n: required(data.n, "data.n")?,
                m,
                c,
                seed: required(data.seed, "data.seed")?,
            },
            other => return Err(Error::InvalidConfig(format!("unknown data.source `{other}`"))),
        };

        Ok(Self {
            network,
            init: net.init.unwrap_or_default(),
            loss,
            train,
            dataset_source,
            output_path: raw.output.unwrap_or_else(|| PathBuf::from("out")),
            baseline: raw.baseline,
        })
    }

    fn to_raw(&self) -> RawConfig {
        let t = &self.train;
        let data = match &self.dataset_source {
            DatasetSource::CsvFile { path } => RawData {
                source: Some("csv".into()),
                path: Some(path.clone()),
                ..RawData::default()
            },
            DatasetSource::TwoPoint { x1, x2 } => RawData {
                source: Some("two_point".into()),
                x1: Some(*x1),
                x2: Some(*x2),
                ..RawData::default()
            },
            DatasetSource::GaussianBlobs { n, m, c, seed } | DatasetSource::RandomRegression { n, m, c, seed } => RawData {
                source: Some(
                    if matches!(self.dataset_source, DatasetSource::GaussianBlobs { .. }) { "gaussian_blobs" } else { "random_regression" }.into(),
                ),
                n: Some(*n),
                m: Some(*m),
                c: Some(*c),
                seed: Some(*seed),
                ..RawData::default()
            },
        };
        RawConfig {
            loss: Some(self.loss),
            output: Some(self.output_path.clone()),
            network: Some(RawNetwork {
                layers: Some(self.network.layer_sizes.clone()),
                activations: self.network.activations.clone(),
                bias: Some(self.network.bias),
                init_scale: Some(self.network.init_scale),
                init: Some(self.init),
                seed: Some(self.network.seed),
            }),
            train: Some(RawTrain {
                eps: Some(t.eps),
                beta: Some(t.beta),
                d: Some(t.step_scale),
                alpha: Some(t.alpha),
                algorithm: Some(t.algorithm),
                inner_tol: t.inner_tol,
                inner_max_iters: Some(t.inner_max_iters),
                step_rule: Some(t.step_rule),
                warm_start: Some(t.warm_start),
                hessian_probes: Some(t.hessian_probes),
                seed: Some(t.seed),
            }),
            data: Some(data),
            baseline: self.baseline,
        }
    }

    /// Renders the config as TOML that parses back to an equal value.
    pub fn to_config_string(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config is always representable as TOML")
    }
}

pub(crate) fn point(p: [f64; 2]) -> DVector<f64> {
    DVector::from_column_slice(&p)
}
