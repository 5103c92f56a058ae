//! Learning the reverse process by watching the forward one.
//!
//! Each training example takes a data point `x0`, a transition index `n`,
//! and a diffused point `x_{n+1}`; the network sees only `x_{n+1}` and the
//! time feature of `t_{n+1}` and is regressed (mean squared error) onto the
//! noise that produced it, onto `x0` itself, or onto the posterior mean.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SampleMatrix, Scaler};
use crate::error::{check_dim, Error, Result};
use crate::forward::step_in_place;
use crate::model::NoiseModel;
use crate::nn::{Activation, Batch, Mlp, Optimizer, OptimizerConfig};
use crate::posterior::{eps_from_pair, mean_weights};
use crate::rng::{self, substream};
use crate::schedule::NoiseSchedule;

/// What the network is trained to output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PredictionTarget {
    /// The standardized noise `eps_0`.
    #[default]
    Epsilon,
    /// The clean point `x_0`.
    X0,
    /// The posterior mean of `x_n` directly.
    Mu,
}

impl std::str::FromStr for PredictionTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" | "eps" => Ok(Self::Epsilon),
            "x0" => Ok(Self::X0),
            "mu" => Ok(Self::Mu),
            other => Err(Error::InvalidArgument(format!("unknown prediction target '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimestepSampling {
    /// Every point contributes all `N` transitions per update.
    AllStepsPerPoint,
    /// Every point contributes one uniformly drawn transition per update.
    #[default]
    OneRandomStepPerPoint,
}

/// Learning-rate schedule over the full training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrDecay {
    Constant,
    /// Half-cosine from the configured rate down to zero at the last update.
    #[default]
    Cosine,
}

impl LrDecay {
    fn factor(self, update: usize, total: usize) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * update as f64 / total as f64).cos()),
        }
    }
}

impl std::str::FromStr for LrDecay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown learning-rate decay '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub target: PredictionTarget,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub lr_decay: LrDecay,
    pub seed: u64,
    pub timestep_sampling: TimestepSampling,
    /// Produce `x_{n+1}` by running the one-step recursion from `x0`
    /// instead of the closed-form marginal.
    pub literal_trajectories: bool,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Stop once the epoch loss has not improved for this many epochs.
    pub plateau_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            target: PredictionTarget::Epsilon,
            epochs: 200,
            batch_size: 256,
            optimizer: OptimizerConfig::default(),
            lr_decay: LrDecay::Cosine,
            seed: 0,
            timestep_sampling: TimestepSampling::OneRandomStepPerPoint,
            literal_trajectories: false,
            hidden: vec![128, 128, 128],
            activation: Activation::Silu,
            plateau_patience: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.optimizer.learning_rate > 0.0 && self.optimizer.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean example loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub updates: usize,
    pub wall_time_secs: f64,
    pub stopped_early: bool,
}

/// One `(x_{n+1}, t_{n+1}) -> target` regression example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub x_next: Vec<f64>,
    pub t_next: f64,
    /// Network time input `t_{n+1} / t_N`.
    pub time_feature: f64,
    pub target: Vec<f64>,
    /// The standard-normal draw that produced `x_next`.
    pub noise: Vec<f64>,
}

fn target_for(
    kind: PredictionTarget,
    x0: &[f64],
    x_next: &[f64],
    noise: &[f64],
    n: usize,
    s: &NoiseSchedule,
) -> Vec<f64> {
    match kind {
        PredictionTarget::Epsilon => noise.to_vec(),
        PredictionTarget::X0 => x0.to_vec(),
        PredictionTarget::Mu => {
            let (wx, w0) = mean_weights(n, s);
            x_next.iter().zip(x0).map(|(x, z)| wx * x + w0 * z).collect()
        }
    }
}

/// Diffuses `x0` to grid index `n + 1` in closed form and builds the
/// regression target for transition `n`.
pub fn make_training_example<R: Rng + ?Sized>(
    x0: &[f64],
    n: usize,
    s: &NoiseSchedule,
    target: PredictionTarget,
    rng: &mut R,
) -> Result<TrainingExample> {
    s.check_step(n)?;
    let noise = rng::standard_normal_vec(rng, x0.len());
    let (g, b) = (s.gamma(n + 1), s.beta(n + 1));
    let x_next: Vec<f64> = x0.iter().zip(&noise).map(|(x, z)| g * x + b * z).collect();
    Ok(TrainingExample {
        target: target_for(target, x0, &x_next, &noise, n, s),
        t_next: s.time(n + 1),
        time_feature: s.time_feature(n + 1),
        x_next,
        noise,
    })
}

/// Runs the one-step recursion from `x0` and returns `x_1..=x_upto`.
fn recursive_path<R: Rng + ?Sized>(x0: &[f64], upto: usize, s: &NoiseSchedule, rng: &mut R) -> Vec<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut z = vec![0.0; x0.len()];
    (0..upto)
        .map(|n| {
            rng::fill_standard_normal(rng, &mut z);
            step_in_place(&mut x, n, &z, s);
            x.clone()
        })
        .collect()
}

/// Example for transition `n` whose `x_{n+1}` is given; the noise is
/// recovered by inverting the closed form.
fn example_from_point(
    x0: &[f64],
    x_next: Vec<f64>,
    n: usize,
    s: &NoiseSchedule,
    target: PredictionTarget,
) -> Result<TrainingExample> {
    let noise = eps_from_pair(&x_next, x0, n + 1, s)?;
    Ok(TrainingExample {
        target: target_for(target, x0, &x_next, &noise, n, s),
        t_next: s.time(n + 1),
        time_feature: s.time_feature(n + 1),
        x_next,
        noise,
    })
}

fn examples_for_point<R: Rng + ?Sized>(
    x0: &[f64],
    s: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut R,
    out: &mut Vec<TrainingExample>,
) -> Result<()> {
    let n_steps = s.n_steps();
    match (cfg.timestep_sampling, cfg.literal_trajectories) {
        (TimestepSampling::OneRandomStepPerPoint, false) => {
            let n = rng.random_range(0..n_steps);
            out.push(make_training_example(x0, n, s, cfg.target, rng)?);
        }
        (TimestepSampling::OneRandomStepPerPoint, true) => {
            let n = rng.random_range(0..n_steps);
            let x_next = recursive_path(x0, n + 1, s, rng).pop().expect("n + 1 >= 1 points");
            out.push(example_from_point(x0, x_next, n, s, cfg.target)?);
        }
        (TimestepSampling::AllStepsPerPoint, false) => {
            for n in 0..n_steps {
                out.push(make_training_example(x0, n, s, cfg.target, rng)?);
            }
        }
        (TimestepSampling::AllStepsPerPoint, true) => {
            for (n, x_next) in recursive_path(x0, n_steps, s, rng).into_iter().enumerate() {
                out.push(example_from_point(x0, x_next, n, s, cfg.target)?);
            }
        }
    }
    Ok(())
}

fn to_batch(examples: &[TrainingExample], d: usize) -> Result<Batch> {
    let mut inputs = Array2::zeros((examples.len(), d + 1));
    let mut targets = Array2::zeros((examples.len(), d));
    for (i, ex) in examples.iter().enumerate() {
        for j in 0..d {
            inputs[[i, j]] = ex.x_next[j];
            targets[[i, j]] = ex.target[j];
        }
        inputs[[i, d]] = ex.time_feature;
    }
    Batch::new(inputs, targets)
}

/// Fits a scaler on `data`, standardizes it, and trains a fresh network.
///
/// The returned model carries the schedule, the scaler, and `cfg`.
pub fn train(data: &SampleMatrix, s: &NoiseSchedule, cfg: &TrainConfig) -> Result<(NoiseModel, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let started = Instant::now();
    let scaler = Scaler::fit(data)?;
    let x = scaler.apply_array(&data.features)?;
    let d = data.dim();

    let mut dims = vec![d + 1];
    dims.extend(&cfg.hidden);
    dims.push(d);
    let mut network = Mlp::init(&dims, cfg.activation, cfg.seed)?;
    let mut optimizer = Optimizer::new(cfg.optimizer, &network);
    // streams 0.. belong to layer initialization
    let mut rng = substream(cfg.seed, 1 << 32);

    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut updates = 0usize;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut examples = Vec::new();
    let total_updates = cfg.epochs * x.nrows().div_ceil(cfg.batch_size);
    let base_lr = cfg.optimizer.learning_rate;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            examples.clear();
            for &i in chunk {
                let x0 = x.row(i);
                let x0 = x0.as_slice().expect("standard layout");
                examples_for_point(x0, s, cfg, &mut rng, &mut examples)?;
            }
            let batch = to_batch(&examples, d)?;
            let (loss, grads) = network.loss_and_grad(&batch)?;
            optimizer.set_learning_rate(base_lr * cfg.lr_decay.factor(updates, total_updates));
            if !loss.is_finite() {
                return Err(Error::Diverged { update: updates, loss });
            }
            optimizer
                .step(&mut network, &grads)
                .map_err(|_| Error::Diverged { update: updates, loss })?;
            updates += 1;
            loss_sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let epoch_loss = loss_sum / count as f64;
        epoch_losses.push(epoch_loss);
        log::debug!("epoch {} loss {epoch_loss:.6}", epoch_losses.len());

        if let Some(patience) = cfg.plateau_patience {
            if epoch_loss < best * (1.0 - 1e-4) {
                best = epoch_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let report = TrainReport {
        final_loss: *epoch_losses.last().expect("at least one epoch"),
        epoch_losses,
        updates,
        wall_time_secs: started.elapsed().as_secs_f64(),
        stopped_early,
    };
    let model = NoiseModel::new(network, s.clone(), scaler, cfg.clone(), data.columns.clone())?;
    Ok((model, report))
}

/// Mean squared error of `model`'s noise predictions on freshly diffused
/// copies of `data` (already on the model's unit scale), one random step per
/// point.
pub fn held_out_eps_loss(model: &NoiseModel, data: &Array2<f64>, seed: u64) -> Result<f64> {
    check_dim(model.network.output_dim(), data.ncols())?;
    let s = &model.schedule;
    let mut rng = substream(seed, 0);
    let examples: Vec<TrainingExample> = data
        .rows()
        .into_iter()
        .map(|row| {
            let n = rng.random_range(0..s.n_steps());
            make_training_example(&row.to_vec(), n, s, PredictionTarget::Epsilon, &mut rng)
        })
        .collect::<Result<_>>()?;
    let batch = to_batch(&examples, data.ncols())?;
    Ok(model.network.loss_and_grad(&batch)?.0)
}
