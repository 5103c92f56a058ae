//! Fully connected noise-prediction network with hand-written
//! backpropagation and a first-order optimizer.
//!
//! The network maps `[x_1..x_d, t_feature]` to a `d`-vector. Hidden layers
//! apply a smooth activation; the output layer is affine. Batches are row
//! matrices and all arithmetic is `f64`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// `x * sigmoid(x)`.
    #[default]
    Silu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }

    /// Derivative at pre-activation `x`.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "silu" => Ok(Activation::Silu),
            other => Err(Error::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

/// Affine layer `y = x W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

/// The parameter set of the noise predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Shape-congruent gradient of the loss with respect to an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::values)
    }
}

/// Training rows: network inputs (features plus time column) and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::Empty("batch"));
        }
        if inputs.nrows() != targets.nrows() || inputs.ncols() != targets.ncols() + 1 {
            return Err(Error::InvalidArgument(format!(
                "batch shapes disagree: inputs {:?}, targets {:?}",
                inputs.dim(),
                targets.dim()
            )));
        }
        Ok(Self { inputs, targets })
    }

    /// Builds a batch from `(x, t_feature, target)` triples.
    pub fn from_examples(examples: &[(Vec<f64>, f64, Vec<f64>)]) -> Result<Self> {
        let first = examples.first().ok_or(Error::Empty("batch"))?;
        let d = first.0.len();
        let mut inputs = Array2::zeros((examples.len(), d + 1));
        let mut targets = Array2::zeros((examples.len(), d));
        for (i, (x, t, y)) in examples.iter().enumerate() {
            if x.len() != d || y.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: if x.len() != d { x.len() } else { y.len() },
                });
            }
            for j in 0..d {
                inputs[[i, j]] = x[j];
                targets[[i, j]] = y[j];
            }
            inputs[[i, d]] = *t;
        }
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

impl Mlp {
    /// Random initialization: weights ~ N(0, 1/fan_in), zero biases.
    /// Layer `k` draws from substream `k` of `seed`.
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_layer_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid std");
                let mut rng = substream(seed, k as u64);
                let weight = Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(&mut rng));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::InvalidArgument(format!(
                    "layer widths disagree: {} then {}",
                    w[0].fan_out(),
                    w[1].fan_in()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::InvalidArgument("bias length disagrees with layer width".into()));
            }
            if l.values().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameters".into()));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in()];
        dims.extend(self.layers.iter().map(Dense::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::values)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::values_mut)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    /// Evaluates the network on one point `x` at time feature `t_feature`.
    pub fn forward(&self, x: &[f64], t_feature: f64) -> Result<Vec<f64>> {
        if x.len() + 1 != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim() - 1,
                got: x.len(),
            });
        }
        check_finite(x, "network input")?;
        if !t_feature.is_finite() {
            return Err(Error::NonFinite("time feature".into()));
        }
        let mut row = Array2::zeros((1, x.len() + 1));
        for (j, v) in x.iter().enumerate() {
            row[[0, j]] = *v;
        }
        row[[0, x.len()]] = t_feature;
        Ok(self.forward_batch(row.view()).row(0).to_vec())
    }

    /// Batched forward pass; `inputs` rows already carry the time column.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = inputs.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            h = z;
        }
        h
    }

    /// Mean squared error `(1/B) sum_i ||target_i - prediction_i||^2` and its
    /// exact gradient.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if batch.inputs.ncols() != self.input_dim() || batch.targets.ncols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: batch.inputs.ncols(),
            });
        }
        let b = batch.len() as f64;
        let last = self.layers.len() - 1;

        // activations[k] is the input to layer k; pre[k] its pre-activation output
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(batch.inputs.clone());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = activations[k].dot(&layer.weight);
            z += &layer.bias;
            let a = if k < last {
                z.mapv(|v| self.activation.apply(v))
            } else {
                z.clone()
            };
            pre.push(z);
            activations.push(a);
        }

        let residual = &activations[last + 1] - &batch.targets;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / b;
        let mut delta = residual * (2.0 / b);

        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let weight = activations[k].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weight.t());
                ndarray::Zip::from(&mut back)
                    .and(&pre[k - 1])
                    .for_each(|g, &z| *g *= self.activation.derivative(z));
                delta = back;
            }
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

fn check_layer_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer dims must list at least two positive widths, got {dims:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    #[default]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidArgument(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state tied to one parameter shape.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &Mlp) -> Self {
        let len = match config.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => params.n_params(),
        };
        Self {
            config,
            steps: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// Applies one update. Gradients must match the parameter shapes and be
    /// finite; on error the parameters are left untouched.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != params.layers.len()
            || grads
                .layers
                .iter()
                .zip(&params.layers)
                .any(|(g, p)| g.weight.dim() != p.weight.dim() || g.bias.len() != p.bias.len())
        {
            return Err(Error::InvalidArgument(
                "gradient shape does not match parameters".into(),
            ));
        }
        if !grads.values().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("gradients".into()));
        }
        self.steps += 1;
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.params_mut().zip(grads.values()) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let OptimizerConfig {
                    beta1, beta2, epsilon, ..
                } = self.config;
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .params_mut()
                    .zip(grads.values())
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}
