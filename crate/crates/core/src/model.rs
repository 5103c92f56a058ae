//! A trained noise predictor bundled with everything needed to sample from it.

use ndarray::{Array2, ArrayView2};

use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::schedule::NoiseSchedule;
use crate::trainer::{PredictionTarget, TrainConfig};

/// Anything that, given `x_{n+1}` rows and the grid index `n + 1`, predicts
/// one of the quantities the reverse posterior can be built from.
pub trait Denoiser: Sync {
    fn dim(&self) -> usize;

    /// Which quantity [`Denoiser::predict`] returns.
    fn output(&self) -> PredictionTarget;

    /// Predictions for each row of `x_next` at grid index `n_next` (1..=N).
    fn predict(&self, x_next: ArrayView2<f64>, n_next: usize, s: &NoiseSchedule) -> Array2<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub network: Mlp,
    pub schedule: NoiseSchedule,
    /// Maps raw features to the unit scale the model was trained on.
    pub scaler: Scaler,
    pub config: TrainConfig,
    pub feature_columns: Vec<String>,
}

impl NoiseModel {
    pub fn new(
        network: Mlp,
        schedule: NoiseSchedule,
        scaler: Scaler,
        config: TrainConfig,
        feature_columns: Vec<String>,
    ) -> Result<Self> {
        let d = network.output_dim();
        if network.input_dim() != d + 1 {
            return Err(Error::InvalidArgument(format!(
                "network maps {} inputs to {} outputs; expected d + 1 -> d",
                network.input_dim(),
                d
            )));
        }
        if scaler.dim() != d || feature_columns.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: scaler.dim(),
            });
        }
        Ok(Self {
            network,
            schedule,
            scaler,
            config,
            feature_columns,
        })
    }

    pub fn target(&self) -> PredictionTarget {
        self.config.target
    }
}

/// Appends the time-feature column for grid index `n` to `x`.
pub fn with_time_column(x: ArrayView2<f64>, n: usize, s: &NoiseSchedule) -> Array2<f64> {
    let (rows, d) = x.dim();
    let tf = s.time_feature(n);
    let mut out = Array2::from_elem((rows, d + 1), tf);
    out.slice_mut(ndarray::s![.., ..d]).assign(&x);
    out
}

impl Denoiser for NoiseModel {
    fn dim(&self) -> usize {
        self.network.output_dim()
    }

    fn output(&self) -> PredictionTarget {
        self.config.target
    }

    fn predict(&self, x_next: ArrayView2<f64>, n_next: usize, s: &NoiseSchedule) -> Array2<f64> {
        self.network.forward_batch(with_time_column(x_next, n_next, s).view())
    }
}
