//! Gaussian reverse posterior `x_n | x_{n+1}, x_0` and the three ways of
//! estimating its mean from a network output.
//!
//! With `g = gamma(dt_{n+1})`, `b = beta(dt_{n+1})`:
//!
//! ```text
//! mean = g * beta_n^2 / beta_{n+1}^2 * x_{n+1} + gamma_n * b^2 / beta_{n+1}^2 * x_0
//! var  = b^2 * beta_n^2 / beta_{n+1}^2
//! ```
//!
//! Substituting `x_0 = (x_{n+1} - beta_{n+1} eps) / gamma_{n+1}` gives the
//! noise-parameterized mean `(x_{n+1} - b^2 / beta_{n+1} * eps) / g`.
//! The posterior is isotropic, so everything below is coordinate-wise.

use crate::error::{check_dim, Result};
use crate::schedule::NoiseSchedule;

/// Divisors involving `beta_{n+1}` are clamped to at least this value.
pub const BETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub mean: Vec<f64>,
    pub stddev: f64,
}

/// Weights `(on x_{n+1}, on x_0)` of the posterior mean at transition `n`.
#[inline]
pub fn mean_weights(n: usize, s: &NoiseSchedule) -> (f64, f64) {
    let denom = s.beta_sq(n + 1).max(BETA_FLOOR * BETA_FLOOR);
    (
        s.step_gamma(n) * s.beta_sq(n) / denom,
        s.gamma(n) * s.step_beta_sq(n) / denom,
    )
}

/// Weights `(on x_{n+1}, on eps)` of the noise-parameterized mean:
/// `mean = w_x * x_{n+1} - w_eps * eps`.
#[inline]
pub fn eps_mean_weights(n: usize, s: &NoiseSchedule) -> (f64, f64) {
    let g = s.step_gamma(n);
    let b_next = s.beta(n + 1).max(BETA_FLOOR);
    (1.0 / g, s.step_beta_sq(n) / (b_next * g))
}

#[inline]
fn variance_unchecked(n: usize, s: &NoiseSchedule) -> f64 {
    s.step_beta_sq(n) * s.beta_sq(n) / s.beta_sq(n + 1).max(BETA_FLOOR * BETA_FLOOR)
}

/// Posterior mean of `x_n` given `x_{n+1}` and `x_0`.
pub fn posterior_mean(x_next: &[f64], x0: &[f64], n: usize, s: &NoiseSchedule) -> Result<Vec<f64>> {
    check_dim(x_next.len(), x0.len())?;
    s.check_step(n)?;
    let (wx, w0) = mean_weights(n, s);
    Ok(x_next.iter().zip(x0).map(|(x, z)| wx * x + w0 * z).collect())
}

/// Posterior variance at transition `n`; zero exactly when `n = 0`.
pub fn posterior_var(n: usize, s: &NoiseSchedule) -> Result<f64> {
    s.check_step(n)?;
    Ok(variance_unchecked(n, s))
}

/// Unchecked standard deviation for sampler inner loops.
#[inline]
pub fn posterior_std(n: usize, s: &NoiseSchedule) -> f64 {
    variance_unchecked(n, s).sqrt()
}

pub fn posterior(x_next: &[f64], x0: &[f64], n: usize, s: &NoiseSchedule) -> Result<PosteriorParams> {
    Ok(PosteriorParams {
        mean: posterior_mean(x_next, x0, n, s)?,
        stddev: posterior_var(n, s)?.sqrt(),
    })
}

/// Standardized noise that carries `x0` to `x_next` at grid index `n_next`:
/// `(x_next - gamma_{n_next} x0) / beta_{n_next}`.
pub fn eps_from_pair(x_next: &[f64], x0: &[f64], n_next: usize, s: &NoiseSchedule) -> Result<Vec<f64>> {
    check_dim(x_next.len(), x0.len())?;
    s.check_noisy_index(n_next)?;
    let g = s.gamma(n_next);
    let b = s.beta(n_next);
    Ok(x_next.iter().zip(x0).map(|(x, z)| (x - g * z) / b).collect())
}

/// Inverse of [`eps_from_pair`]: `(x_next - beta_{n_next} eps) / gamma_{n_next}`.
pub fn x0_from_eps(x_next: &[f64], eps: &[f64], n_next: usize, s: &NoiseSchedule) -> Result<Vec<f64>> {
    check_dim(x_next.len(), eps.len())?;
    s.check_noisy_index(n_next)?;
    let g = s.gamma(n_next);
    let b = s.beta(n_next);
    Ok(x_next.iter().zip(eps).map(|(x, e)| (x - b * e) / g).collect())
}

/// Posterior mean expressed through the noise estimate `eps`.
pub fn mean_from_eps(x_next: &[f64], eps: &[f64], n: usize, s: &NoiseSchedule) -> Result<Vec<f64>> {
    check_dim(x_next.len(), eps.len())?;
    s.check_step(n)?;
    let (wx, we) = eps_mean_weights(n, s);
    Ok(x_next.iter().zip(eps).map(|(x, e)| wx * x - we * e).collect())
}

/// Posterior mean with an estimate of `x_0` plugged in.
pub fn mean_from_x0_hat(x_next: &[f64], x0_hat: &[f64], n: usize, s: &NoiseSchedule) -> Result<Vec<f64>> {
    posterior_mean(x_next, x0_hat, n, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, substream};
    use rand::Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn first_step_collapses_to_x0() {
        let s = NoiseSchedule::build(50, 1e-3, 0.1).unwrap();
        assert_eq!(posterior_var(0, &s).unwrap(), 0.0);
        let m = posterior_mean(&[5.0, -7.0], &[1.5, 2.5], 0, &s).unwrap();
        assert_eq!(m, vec![1.5, 2.5]);
        assert_eq!(posterior_mean(&[0.0], &[0.0], 10, &s).unwrap(), vec![0.0]);
    }

    #[test]
    fn three_step_variance() {
        let s = NoiseSchedule::build(3, 0.1, 0.3).unwrap();
        // b^2 = 0.2, beta_1^2 = 0.1, beta_2^2 = 1 - 0.9 * 0.8 = 0.28
        let v = posterior_var(1, &s).unwrap();
        assert!((v - 0.2 * 0.1 / 0.28).abs() < 1e-14);
        assert!((v - 0.071_428_6).abs() < 1e-7);
        assert!(posterior_var(3, &s).is_err());
    }

    #[test]
    fn variance_below_both_factors() {
        let s = NoiseSchedule::build(100, 1e-4, 0.2).unwrap();
        for n in 1..100 {
            let v = posterior_var(n, &s).unwrap();
            assert!(v > 0.0 && v < s.step_beta_sq(n) && v < s.beta_sq(n));
        }
    }

    #[test]
    fn mean_lies_between_decay_and_value() {
        for (n_steps, lo, hi) in [(10, 0.01, 0.3), (200, 1e-4, 0.2), (1000, 1e-4, 0.02)] {
            let s = NoiseSchedule::build(n_steps, lo, hi).unwrap();
            for n in 0..n_steps {
                for c in [-3.0, 0.7, 12.0] {
                    let m = posterior_mean(&[c], &[c], n, &s).unwrap()[0];
                    let lo = (s.step_gamma(n) * c).min(c);
                    let hi = (s.step_gamma(n) * c).max(c);
                    assert!(m >= lo - 1e-12 && m <= hi + 1e-12, "n={n} c={c} m={m}");
                }
            }
        }
    }

    #[test]
    fn eps_round_trips() {
        let s = NoiseSchedule::build(200, 1e-4, 0.2).unwrap();
        let mut rng = substream(1, 0);
        for _ in 0..500 {
            let n = rng.random_range(1..=200);
            let x0 = [standard_normal(&mut rng) * 3.0, standard_normal(&mut rng)];
            let z = [standard_normal(&mut rng), standard_normal(&mut rng)];
            let x_next: Vec<f64> = (0..2).map(|i| s.gamma(n) * x0[i] + s.beta(n) * z[i]).collect();
            let eps = eps_from_pair(&x_next, &x0, n, &s).unwrap();
            for i in 0..2 {
                assert!((eps[i] - z[i]).abs() < 1e-9 * (1.0 + z[i].abs()) / s.beta(n).min(1.0));
            }
            let back = x0_from_eps(&x_next, &eps, n, &s).unwrap();
            for i in 0..2 {
                assert!((back[i] - x0[i]).abs() < 1e-9 * (1.0 + x0[i].abs()) / s.gamma(n));
            }
        }
        let zero = eps_from_pair(&[s.gamma(4) * 2.0], &[2.0], 4, &s).unwrap();
        assert_eq!(zero, vec![0.0]);
        assert!(eps_from_pair(&[1.0], &[1.0], 0, &s).is_err());
    }

    #[test]
    fn x0_from_eps_arithmetic() {
        // b = 3/4 at the second step makes dt_2 = ln 2
        let s = NoiseSchedule::build(2, 0.5, 0.75).unwrap();
        let v = x0_from_eps(&[1.0], &[0.0], 2, &s).unwrap()[0];
        assert!((v - 1.0 / s.gamma(2)).abs() < 1e-15);
        // direct arithmetic with gamma = 0.5, beta = sqrt(0.75)
        let (g, b) = (0.5f64, 0.75f64.sqrt());
        assert!(((1.0 - b * 1.0) / g - 0.267_949_2).abs() < 1e-7);
    }

    #[test]
    fn parameterizations_agree() {
        let s = NoiseSchedule::build(200, 1e-4, 0.2).unwrap();
        let mut rng = substream(2, 0);
        for _ in 0..2000 {
            let n = rng.random_range(0..200);
            let x_next = [standard_normal(&mut rng), 4.0 * standard_normal(&mut rng)];
            let x0 = [standard_normal(&mut rng), -1.0 + standard_normal(&mut rng)];
            let direct = posterior_mean(&x_next, &x0, n, &s).unwrap();
            let eps = eps_from_pair(&x_next, &x0, n + 1, &s).unwrap();
            let via_eps = mean_from_eps(&x_next, &eps, n, &s).unwrap();
            let x0_hat = x0_from_eps(&x_next, &eps, n + 1, &s).unwrap();
            let via_x0 = mean_from_x0_hat(&x_next, &x0_hat, n, &s).unwrap();
            for i in 0..2 {
                let scale = direct[i].abs().max(1e-3);
                assert!((via_eps[i] - direct[i]).abs() / scale < 1e-12, "n={n}");
                assert!((via_x0[i] - via_eps[i]).abs() / scale < 1e-12, "n={n}");
            }
        }
        let at_zero = mean_from_eps(&[3.0], &[0.0], 7, &s).unwrap()[0];
        assert!(rel(at_zero, 3.0 / s.step_gamma(7)) < 1e-15);
        let x0 = [0.25];
        let x1 = [s.gamma(1) * 0.25 + s.beta(1) * 0.9];
        let eps = eps_from_pair(&x1, &x0, 1, &s).unwrap();
        assert!((mean_from_eps(&x1, &eps, 0, &s).unwrap()[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn linear_in_x0_hat() {
        let s = NoiseSchedule::build(20, 1e-3, 0.3).unwrap();
        let (_, w0) = mean_weights(5, &s);
        let a = mean_from_x0_hat(&[1.0], &[1.5], 5, &s).unwrap()[0];
        let b = mean_from_x0_hat(&[1.0], &[3.0], 5, &s).unwrap()[0];
        assert!((b - a - w0 * 1.5).abs() < 1e-14);
    }
}
