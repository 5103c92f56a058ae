//! Evaluation statistics: Gaussian KDE, the energy-distance two-sample
//! statistic with a resampling null, and binary classification metrics.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeCurve {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

/// Silverman's rule of thumb `1.06 * sd * m^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Empty("need at least two samples for a bandwidth"));
    }
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let sd = (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt();
    if sd <= 0.0 {
        return Err(Error::InvalidArgument("samples have zero spread".into()));
    }
    Ok(1.06 * sd * m.powf(-0.2))
}

/// Gaussian kernel density estimate of `samples` evaluated on `grid`.
pub fn kde_1d(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<KdeCurve> {
    if samples.is_empty() {
        return Err(Error::Empty("kde samples"));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
        }
        None => silverman_bandwidth(samples)?,
    };
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    let density = grid
        .par_iter()
        .map(|&x| {
            samples
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(KdeCurve {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[inline]
fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean pairwise Euclidean distance between the rows of `a` and `b`.
/// Rows are reduced in parallel, then summed in row order.
fn mean_cross_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let row_sums: Vec<f64> = (0..a.nrows())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            b.rows().into_iter().map(|bj| dist(ai, bj)).sum::<f64>()
        })
        .collect();
    row_sums.iter().sum::<f64>() / (a.nrows() as f64 * b.nrows() as f64)
}

/// Energy statistic `2 E|A - B| - E|A - A'| - E|B - B'|` with all
/// expectations taken over every ordered pair (diagonals included), so
/// identical samples give exactly zero.
pub fn energy_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::Empty("energy distance sample"));
    }
    check_dim(a.ncols(), b.ncols())?;
    let ab = mean_cross_distance(a, b);
    let aa = mean_cross_distance(a, a);
    let bb = mean_cross_distance(b, b);
    Ok((2.0 * ab - aa - bb).max(0.0))
}

/// Energy distances between random disjoint splits of `pool` into parts of
/// sizes `n_a` and `n_b`; the empirical same-distribution null.
pub fn energy_null(pool: ArrayView2<f64>, n_a: usize, n_b: usize, n_splits: usize, seed: u64) -> Result<Vec<f64>> {
    if n_a == 0 || n_b == 0 || n_a + n_b > pool.nrows() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} rows into parts of {n_a} and {n_b}",
            pool.nrows()
        )));
    }
    let mut rng = substream(seed, 0);
    let mut idx: Vec<usize> = (0..pool.nrows()).collect();
    let mut out = Vec::with_capacity(n_splits);
    for _ in 0..n_splits {
        idx.shuffle(&mut rng);
        let a: Array2<f64> = pool.select(Axis(0), &idx[..n_a]);
        let b: Array2<f64> = pool.select(Axis(0), &idx[n_a..n_a + n_b]);
        out.push(energy_distance(a.view(), b.view())?);
    }
    Ok(out)
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Confusion counts and the derived detection metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    /// `None` when there are no actual positives.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => Some(f1_score(p, r)),
            _ => None,
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }
}

pub fn classification_metrics(predicted: &[i64], actual: &[i64], positive: i64) -> Result<EvalReport> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p == positive, a == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(EvalReport::from_counts(tp, fp, fn_, tn))
}
