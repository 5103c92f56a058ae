//! Discrete time grid and noise coefficients of the OU forward process.
//!
//! The grid is controlled through per-step noise levels `b_1 < ... < b_N`
//! spaced evenly between `b_min` and `b_max`; each step length is
//! `dt_n = -ln(1 - b_n) / 2`, so a single step of the process adds noise of
//! variance exactly `b_n`. Cumulative coefficients follow from
//! `gamma(t) = exp(-t)` and `beta(t) = sqrt(1 - exp(-2t))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this terminal noise scale `X_N` is noticeably non-Gaussian.
pub const TERMINAL_BETA_WARN: f64 = 0.999;

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

/// Mean-shrink factor `exp(-t)`.
pub fn gamma_of(t: f64) -> Result<f64> {
    check_time(t)?;
    Ok((-t).exp())
}

/// Noise scale `sqrt(1 - exp(-2t))`.
pub fn beta_of(t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(beta_sq(t).sqrt())
}

#[inline]
fn beta_sq(t: f64) -> f64 {
    -(-2.0 * t).exp_m1()
}

/// The three numbers that determine a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub n_steps: usize,
    pub b_min: f64,
    pub b_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            n_steps: 200,
            b_min: 1e-4,
            b_max: 0.2,
        }
    }
}

impl ScheduleParams {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(self.n_steps, self.b_min, self.b_max)
    }
}

/// Precomputed time grid and coefficients.
///
/// Indexing convention: step quantities (`step_var`, `dt`, step gamma/beta)
/// are stored 0-based, so slot `k` belongs to step `k + 1`; cumulative
/// quantities (`t`, `gamma`, `beta`) carry the `n = 0` entry and have
/// length `N + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    step_var: Vec<f64>,
    dt: Vec<f64>,
    step_gamma: Vec<f64>,
    step_beta: Vec<f64>,
    step_beta_sq: Vec<f64>,
    t: Vec<f64>,
    cum_gamma: Vec<f64>,
    cum_beta: Vec<f64>,
    cum_beta_sq: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(n_steps: usize, b_min: f64, b_max: f64) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidSchedule(format!("need at least 2 steps, got {n_steps}")));
        }
        let in_unit = |b: f64| b.is_finite() && b > 0.0 && b < 1.0;
        if !in_unit(b_min) || !in_unit(b_max) {
            return Err(Error::InvalidSchedule(format!(
                "noise bounds must lie in (0, 1), got [{b_min}, {b_max}]"
            )));
        }
        if b_min >= b_max {
            return Err(Error::InvalidSchedule(format!(
                "b_min ({b_min}) must be smaller than b_max ({b_max})"
            )));
        }

        let span = (b_max - b_min) / (n_steps - 1) as f64;
        let step_var: Vec<f64> = (0..n_steps).map(|k| b_min + span * k as f64).collect();
        let dt: Vec<f64> = step_var.iter().map(|b| -0.5 * (-b).ln_1p()).collect();
        if dt.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule(
                "step lengths are not strictly increasing (bounds too close for this many steps)".into(),
            ));
        }

        let mut t = Vec::with_capacity(n_steps + 1);
        t.push(0.0);
        let mut acc = 0.0;
        for &d in &dt {
            acc += d;
            t.push(acc);
        }

        let step_gamma = dt.iter().map(|&d| (-d).exp()).collect();
        let step_beta_sq: Vec<f64> = dt.iter().map(|&d| beta_sq(d)).collect();
        let step_beta = step_beta_sq.iter().map(|v| v.sqrt()).collect();
        let cum_gamma = t.iter().map(|&s| (-s).exp()).collect();
        let cum_beta_sq: Vec<f64> = t.iter().map(|&s| beta_sq(s)).collect();
        let cum_beta: Vec<f64> = cum_beta_sq.iter().map(|v| v.sqrt()).collect();

        let terminal = cum_beta[n_steps];
        if terminal < TERMINAL_BETA_WARN {
            log::warn!(
                "terminal noise scale beta_N = {terminal:.6} < {TERMINAL_BETA_WARN}; \
                 X_N is not close to standard normal (t_N = {:.4})",
                t[n_steps]
            );
        }

        Ok(Self {
            params: ScheduleParams { n_steps, b_min, b_max },
            step_var,
            dt,
            step_gamma,
            step_beta,
            step_beta_sq,
            t,
            cum_gamma,
            cum_beta,
            cum_beta_sq,
        })
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    /// Number of steps `N`.
    pub fn n_steps(&self) -> usize {
        self.params.n_steps
    }

    /// Per-step noise levels `b_1..b_N`.
    pub fn step_var(&self) -> &[f64] {
        &self.step_var
    }

    /// Step lengths `dt_1..dt_N`.
    pub fn dt(&self) -> &[f64] {
        &self.dt
    }

    /// Grid times `t_0 = 0, t_1, ..., t_N`.
    pub fn times(&self) -> &[f64] {
        &self.t
    }

    /// `t_n`. Panics if `n > N`.
    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        self.t[n]
    }

    /// Terminal time `t_N`.
    pub fn t_max(&self) -> f64 {
        self.t[self.n_steps()]
    }

    /// `gamma_n`. Panics if `n > N`.
    #[inline]
    pub fn gamma(&self, n: usize) -> f64 {
        self.cum_gamma[n]
    }

    /// `beta_n`. Panics if `n > N`.
    #[inline]
    pub fn beta(&self, n: usize) -> f64 {
        self.cum_beta[n]
    }

    /// `beta_n^2`, evaluated directly rather than by squaring `beta_n`.
    #[inline]
    pub fn beta_sq(&self, n: usize) -> f64 {
        self.cum_beta_sq[n]
    }

    /// Coefficients of the transition `n -> n + 1`:
    /// `(gamma(dt_{n+1}), beta(dt_{n+1}))`.
    pub fn step_coeffs(&self, n: usize) -> Result<(f64, f64)> {
        self.check_step(n)?;
        Ok((self.step_gamma[n], self.step_beta[n]))
    }

    /// `gamma(dt_{n+1})`. Panics if `n >= N`.
    #[inline]
    pub fn step_gamma(&self, n: usize) -> f64 {
        self.step_gamma[n]
    }

    /// `beta(dt_{n+1})`. Panics if `n >= N`.
    #[inline]
    pub fn step_beta(&self, n: usize) -> f64 {
        self.step_beta[n]
    }

    /// `beta(dt_{n+1})^2`. Panics if `n >= N`.
    #[inline]
    pub fn step_beta_sq(&self, n: usize) -> f64 {
        self.step_beta_sq[n]
    }

    /// Time feature fed to the network for grid index `n`: `t_n / t_N`.
    #[inline]
    pub fn time_feature(&self, n: usize) -> f64 {
        self.t[n] / self.t_max()
    }

    /// Validates a transition index `n` in `0..N`.
    pub fn check_step(&self, n: usize) -> Result<()> {
        if n < self.n_steps() {
            Ok(())
        } else {
            Err(Error::StepOutOfRange {
                index: n,
                min: 0,
                max: self.n_steps() - 1,
            })
        }
    }

    /// Validates a grid index `n` in `1..=N` (one with nonzero noise).
    pub fn check_noisy_index(&self, n: usize) -> Result<()> {
        if (1..=self.n_steps()).contains(&n) {
            Ok(())
        } else {
            Err(Error::StepOutOfRange {
                index: n,
                min: 1,
                max: self.n_steps(),
            })
        }
    }
}
