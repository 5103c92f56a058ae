//! Forward OU noising: exact closed-form marginals, the exact one-step
//! recursion on the schedule grid, and a Monte-Carlo Itô-integral estimator
//! used to check the Gaussian stochastic-integral lemma behind both.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::rng::{self, substream};
use crate::schedule::{beta_of, gamma_of, NoiseSchedule, ScheduleParams};

/// `gamma(t) * x0 + beta(t) * z`, i.e. a draw of `X_t | X_0 = x0` when `z`
/// is standard normal.
pub fn closed_form_sample(x0: &[f64], t: f64, z: &[f64]) -> Result<Vec<f64>> {
    check_dim(x0.len(), z.len())?;
    check_finite(x0, "x0")?;
    check_finite(z, "noise")?;
    let g = gamma_of(t)?;
    let b = beta_of(t)?;
    Ok(x0.iter().zip(z).map(|(x, e)| g * x + b * e).collect())
}

/// One exact transition `x_n -> x_{n+1}`.
pub fn recursive_step(x: &[f64], n: usize, z: &[f64], s: &NoiseSchedule) -> Result<Vec<f64>> {
    check_dim(x.len(), z.len())?;
    s.check_step(n)?;
    let mut out = x.to_vec();
    step_in_place(&mut out, n, z, s);
    Ok(out)
}

/// Unchecked in-place variant of [`recursive_step`] for inner loops.
#[inline]
pub fn step_in_place(x: &mut [f64], n: usize, z: &[f64], s: &NoiseSchedule) {
    let g = s.step_gamma(n);
    let b = s.step_beta(n);
    for (xi, zi) in x.iter_mut().zip(z) {
        *xi = g * *xi + b * zi;
    }
}

/// A discretized forward path `x_0, ..., x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<Vec<f64>>,
    schedule: ScheduleParams,
}

impl Trajectory {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn terminal(&self) -> &[f64] {
        self.points.last().expect("trajectory is never empty")
    }

    pub fn schedule(&self) -> ScheduleParams {
        self.schedule
    }
}

/// Runs the recursion from `x0` through all `N` steps with fresh,
/// independent noise at each step.
pub fn simulate_trajectory<R: Rng + ?Sized>(x0: &[f64], s: &NoiseSchedule, rng: &mut R) -> Result<Trajectory> {
    if x0.is_empty() {
        return Err(Error::Empty("x0"));
    }
    check_finite(x0, "x0")?;
    let d = x0.len();
    let mut points = Vec::with_capacity(s.n_steps() + 1);
    points.push(x0.to_vec());
    let mut x = x0.to_vec();
    let mut z = vec![0.0; d];
    for n in 0..s.n_steps() {
        rng::fill_standard_normal(rng, &mut z);
        step_in_place(&mut x, n, &z, s);
        points.push(x.clone());
    }
    Ok(Trajectory {
        points,
        schedule: s.params(),
    })
}

/// `count` independent trajectories; trajectory `k` draws from substream
/// `k` of `seed`, so the result does not depend on the thread count.
pub fn simulate_trajectories(x0: &[f64], s: &NoiseSchedule, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| simulate_trajectory(x0, s, &mut substream(seed, k)))
        .collect()
}

/// Monte-Carlo estimate of the law of the Itô integral `∫_a^b g(s) dB_s`.
///
/// Each path uses `n_substeps` equal increments with the integrand evaluated
/// at the left endpoint. Returns the sample mean and the unbiased sample
/// variance over `n_samples` independent paths (path `i` uses substream `i`).
pub fn ito_mc_oracle<G>(g: G, a: f64, b: f64, n_substeps: usize, n_samples: usize, seed: u64) -> Result<(f64, f64)>
where
    G: Fn(f64) -> f64 + Sync,
{
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidArgument(format!(
            "invalid integration interval [{a}, {b}]"
        )));
    }
    if n_substeps == 0 || n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_substeps and n_samples must be positive".into(),
        ));
    }
    let h = (b - a) / n_substeps as f64;
    let sqrt_h = h.sqrt();
    let weights: Vec<f64> = (0..n_substeps).map(|i| g(a + h * i as f64)).collect();
    check_finite(&weights, "integrand")?;

    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            weights
                .iter()
                .map(|w| w * sqrt_h * rng::standard_normal(&mut rng))
                .sum::<f64>()
        })
        .collect();

    let m = n_samples as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if n_samples > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(v: &[f64]) -> (f64, f64, f64, f64) {
        let m = v.len() as f64;
        let mean = v.iter().sum::<f64>() / m;
        let c = |p: i32| v.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / m;
        let var = c(2);
        (mean, var, c(3) / var.powf(1.5), c(4) / (var * var) - 3.0)
    }

    #[test]
    fn closed_form_examples() {
        let x0 = [2.0, -1.0];
        assert_eq!(closed_form_sample(&x0, 0.0, &[0.3, 0.4]).unwrap(), x0.to_vec());
        let y = closed_form_sample(&x0, 2f64.ln(), &[0.0, 0.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] + 0.5).abs() < 1e-15);
        assert!(closed_form_sample(&x0, 1.0, &[0.0]).is_err());
        assert!(closed_form_sample(&[f64::NAN], 1.0, &[0.0]).is_err());
        assert!(closed_form_sample(&x0, -1.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn closed_form_converges_from_three() {
        let mut rng = substream(11, 0);
        let v: Vec<f64> = (0..200_000)
            .map(|_| closed_form_sample(&[3.0], 20.0, &[rng::standard_normal(&mut rng)]).unwrap()[0])
            .collect();
        let (mean, var, _, _) = moments(&v);
        assert!(mean.abs() < 0.015, "{mean}");
        assert!((var - 1.0).abs() < 0.015, "{var}");
    }

    #[test]
    fn recursive_step_examples() {
        let s = NoiseSchedule::build(3, 0.1, 0.3).unwrap();
        let y = recursive_step(&[1.0], 0, &[1.0], &s).unwrap();
        assert!((y[0] - 1.264_911_1).abs() < 1e-7);
        assert!((y[0] - (0.9f64.sqrt() + 0.1f64.sqrt())).abs() < 1e-15);

        let x = [0.5, -2.0];
        for n in 0..3 {
            let y = recursive_step(&x, n, &[0.0, 0.0], &s).unwrap();
            assert!(y.iter().zip(&x).all(|(a, b)| a.abs() < b.abs()));
        }
        assert!(recursive_step(&x, 3, &[0.0, 0.0], &s).is_err());
        assert!(recursive_step(&x, 0, &[0.0], &s).is_err());
    }

    #[test]
    fn trajectories_are_deterministic_and_diverge() {
        let s = ScheduleParams::default().build().unwrap();
        let a = simulate_trajectories(&[3.0], &s, 10, 7).unwrap();
        let b = simulate_trajectories(&[3.0], &s, 10, 7).unwrap();
        assert_eq!(a, b);
        for tr in &a {
            assert_eq!(tr.len(), s.n_steps() + 1);
            assert_eq!(tr.points()[0], vec![3.0]);
            assert!(tr.points().iter().flatten().all(|v| v.is_finite()));
        }
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert_ne!(a[i].points()[1], a[j].points()[1]);
            }
        }
    }

    #[test]
    fn terminal_points_look_gaussian() {
        let s = ScheduleParams::default().build().unwrap();
        let trs = simulate_trajectories(&[3.0], &s, 500, 2024).unwrap();
        let v: Vec<f64> = trs.iter().map(|t| t.terminal()[0]).collect();
        let (_, _, skew, kurt) = moments(&v);
        assert!(skew.abs() < 0.2, "skew {skew}");
        assert!(kurt.abs() < 0.5, "excess kurtosis {kurt}");
    }

    #[test]
    fn ito_oracle_basic_cases() {
        assert_eq!(ito_mc_oracle(|_| 0.0, 0.0, 1.0, 10, 100, 1).unwrap(), (0.0, 0.0));
        let (mean, var) = ito_mc_oracle(|_| 1.0, 0.0, 1.0, 50, 40_000, 3).unwrap();
        let se = (1.0f64 / 40_000.0).sqrt();
        assert!(mean.abs() < 4.0 * se);
        assert!((var - 1.0).abs() < 3.0 * (2.0f64 / 40_000.0).sqrt());
        assert!(ito_mc_oracle(|_| 1.0, 1.0, 1.0, 10, 10, 0).is_err());
        assert!(ito_mc_oracle(|_| 1.0, 0.0, 1.0, 0, 10, 0).is_err());
    }

    #[test]
    fn ito_oracle_ou_variance() {
        let t = 0.7f64;
        let n = 40_000usize;
        let (mean, var) = ito_mc_oracle(|s| 2f64.sqrt() * (-(t - s)).exp(), 0.0, t, 200, n, 5).unwrap();
        let truth = 1.0 - (-2.0 * t).exp();
        assert!(mean.abs() < 4.0 * (truth / n as f64).sqrt());
        assert!((var - truth).abs() < 3.0 * (2.0 / n as f64).sqrt() * truth);
    }
}
