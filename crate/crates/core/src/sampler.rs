//! Ancestral sampling of the reverse chain.
//!
//! Starting from `x_N ~ N(0, I)`, each step predicts with the denoiser at
//! `(x_{n+1}, t_{n+1})`, forms the posterior-mean estimate, and draws
//! `x_n = mean + sigma_n z`. Because `sigma_0 = 0` the last step is
//! deterministic.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::error::{Error, Result};
use crate::model::{Denoiser, NoiseModel};
use crate::posterior::{eps_mean_weights, mean_weights, posterior_std};
use crate::rng::{self, substream, Stream};
use crate::schedule::NoiseSchedule;
use crate::trainer::PredictionTarget;

/// How the posterior mean is estimated from the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Noise-parameterized mean.
    Epsilon,
    /// Posterior mean with an `x0` estimate plugged in.
    X0Hat,
    /// The network output is the mean.
    MuDirect,
}

impl Method {
    /// The method matching what a network was trained to predict.
    pub fn native(target: PredictionTarget) -> Self {
        match target {
            PredictionTarget::Epsilon => Method::Epsilon,
            PredictionTarget::X0 => Method::X0Hat,
            PredictionTarget::Mu => Method::MuDirect,
        }
    }

    fn check(self, output: PredictionTarget) -> Result<()> {
        let ok = match self {
            Method::Epsilon | Method::X0Hat => output != PredictionTarget::Mu,
            Method::MuDirect => output == PredictionTarget::Mu,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "sampling method {self:?} cannot use a model that predicts {output:?}"
            )))
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" | "eps" => Ok(Method::Epsilon),
            "x0" | "x0_hat" => Ok(Method::X0Hat),
            "mu" | "mu_direct" => Ok(Method::MuDirect),
            other => Err(Error::InvalidArgument(format!("unknown sampling method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Defaults to the model's native method.
    pub method: Option<Method>,
}

/// Samples processed together through the network.
const CHUNK: usize = 256;

/// Posterior-mean estimate for every row, per `method`, given the
/// denoiser's raw output at transition `n`.
fn estimate_mean(
    x_next: ArrayView2<f64>,
    out: Array2<f64>,
    output: PredictionTarget,
    method: Method,
    n: usize,
    s: &NoiseSchedule,
) -> Array2<f64> {
    let (g_next, b_next) = (s.gamma(n + 1), s.beta(n + 1));
    match method {
        Method::MuDirect => out,
        Method::Epsilon => {
            let mut eps = out;
            if output == PredictionTarget::X0 {
                Zip::from(&mut eps)
                    .and(x_next)
                    .for_each(|e, &x| *e = (x - g_next * *e) / b_next);
            }
            let (wx, we) = eps_mean_weights(n, s);
            Zip::from(&mut eps).and(x_next).for_each(|e, &x| *e = wx * x - we * *e);
            eps
        }
        Method::X0Hat => {
            let mut x0 = out;
            if output == PredictionTarget::Epsilon {
                Zip::from(&mut x0)
                    .and(x_next)
                    .for_each(|e, &x| *e = (x - b_next * *e) / g_next);
            }
            let (wx, w0) = mean_weights(n, s);
            Zip::from(&mut x0).and(x_next).for_each(|e, &x| *e = wx * x + w0 * *e);
            x0
        }
    }
}

/// Runs the reverse chain on the rows of `x` (which start as `x_N`), row
/// `i` drawing its noise from `rngs[i]`. Returns copies of the state at
/// each grid index listed in `snapshots`.
pub fn reverse_chain<D: Denoiser + ?Sized>(
    denoiser: &D,
    s: &NoiseSchedule,
    method: Method,
    x: &mut Array2<f64>,
    rngs: &mut [Stream],
    snapshots: &[usize],
) -> Result<Vec<Array2<f64>>> {
    method.check(denoiser.output())?;
    if x.ncols() != denoiser.dim() {
        return Err(Error::DimensionMismatch {
            expected: denoiser.dim(),
            got: x.ncols(),
        });
    }
    assert_eq!(x.nrows(), rngs.len(), "one stream per row");
    let n_steps = s.n_steps();
    let mut taken = vec![None; snapshots.len()];
    let mut record = |n: usize, x: &Array2<f64>| {
        for (slot, &k) in taken.iter_mut().zip(snapshots) {
            if k == n {
                *slot = Some(x.clone());
            }
        }
    };
    record(n_steps, x);

    let d = x.ncols();
    let mut z = vec![0.0; d];
    for n in (0..n_steps).rev() {
        let out = denoiser.predict(x.view(), n + 1, s);
        let mut next = estimate_mean(x.view(), out, denoiser.output(), method, n, s);
        let sigma = posterior_std(n, s);
        for (mut row, rng) in next.axis_iter_mut(Axis(0)).zip(rngs.iter_mut()) {
            rng::fill_standard_normal(rng, &mut z);
            for (v, e) in row.iter_mut().zip(&z) {
                *v += sigma * e;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: n });
        }
        *x = next;
        record(n, x);
    }
    Ok(taken
        .into_iter()
        .map(|t| t.expect("snapshot index outside 0..=N"))
        .collect())
}

/// Draws `n_samples` points on the denoiser's (standardized) scale, plus
/// snapshots of the chain at the requested grid indices. Sample `k` uses
/// substream `k` of `seed` exclusively.
pub fn sample_standardized<D: Denoiser + ?Sized>(
    denoiser: &D,
    s: &NoiseSchedule,
    method: Method,
    n_samples: usize,
    seed: u64,
    snapshots: &[usize],
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if let Some(&bad) = snapshots.iter().find(|&&k| k > s.n_steps()) {
        return Err(Error::StepOutOfRange {
            index: bad,
            min: 0,
            max: s.n_steps(),
        });
    }
    let d = denoiser.dim();
    let starts: Vec<usize> = (0..n_samples).step_by(CHUNK).collect();
    let chunks: Vec<(Array2<f64>, Vec<Array2<f64>>)> = starts
        .par_iter()
        .map(|&start| {
            let len = CHUNK.min(n_samples - start);
            let mut rngs: Vec<Stream> = (start..start + len).map(|k| substream(seed, k as u64)).collect();
            let mut x = Array2::zeros((len, d));
            for (mut row, rng) in x.axis_iter_mut(Axis(0)).zip(rngs.iter_mut()) {
                for v in row.iter_mut() {
                    *v = rng::standard_normal(rng);
                }
            }
            let snaps = reverse_chain(denoiser, s, method, &mut x, &mut rngs, snapshots)?;
            Ok((x, snaps))
        })
        .collect::<Result<_>>()?;

    let join = |parts: Vec<ArrayView2<f64>>| ndarray::concatenate(Axis(0), &parts).expect("chunks share width");
    let finals = join(chunks.iter().map(|c| c.0.view()).collect());
    let snaps = (0..snapshots.len())
        .map(|k| join(chunks.iter().map(|c| c.1[k].view()).collect()))
        .collect();
    Ok((finals, snaps))
}

/// One sample on the model's standardized scale.
pub fn generate_one<R: rand::Rng + ?Sized>(
    model: &NoiseModel,
    method: Option<Method>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let method = method.unwrap_or_else(|| Method::native(model.target()));
    let mut stream = substream(rng.random(), 0);
    let d = model.network.output_dim();
    let mut x = Array2::from_shape_vec((1, d), rng::standard_normal_vec(&mut stream, d)).expect("shape matches");
    reverse_chain(
        model,
        &model.schedule,
        method,
        &mut x,
        std::slice::from_mut(&mut stream),
        &[],
    )?;
    Ok(x.row(0).to_vec())
}

/// Generates samples and maps them back to the original feature scale.
pub fn generate_batch(model: &NoiseModel, cfg: &GenerationConfig) -> Result<SampleMatrix> {
    let method = cfg.method.unwrap_or_else(|| Method::native(model.target()));
    let (x, _) = sample_standardized(model, &model.schedule, method, cfg.n_samples, cfg.seed, &[])?;
    let raw = model.scaler.invert_array(&x)?;
    SampleMatrix::new(model.feature_columns.clone(), raw)
}
