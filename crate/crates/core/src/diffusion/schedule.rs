//! Noise schedules and the closed-form forward/posterior steps.
//!
//! Arrays are indexed by step `n ∈ [0, N)`; step 0 is the least noisy.
//! `alpha_bars[n] = Π_{i≤n} (1 − betas[i])`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tensor::MotionTensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_STEPS: usize = 100;
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::InvalidArgument(format!(
                "unknown schedule `{other}` (expected linear or cosine)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    pub kind: ScheduleKind,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<DiffusionSchedule> {
    if steps < 2 {
        return Err(Error::BadStepCount(steps));
    }
    let n = steps as f64;
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear => {
            // The usual 1000-step endpoints, rescaled so shorter chains reach
            // a comparable terminal noise level.
            let lo = (1e-4 * 1000.0 / n).min(0.005);
            let hi = (0.02 * 1000.0 / n).min(MAX_BETA);
            (0..steps)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1.0))
                .collect()
        }
        ScheduleKind::Cosine => {
            let f = |t: f64| {
                let c = ((t / n + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2).cos();
                c * c
            };
            (1..=steps)
                .map(|k| (1.0 - f(k as f64) / f(k as f64 - 1.0)).clamp(1e-8, MAX_BETA))
                .collect()
        }
    };
    DiffusionSchedule::from_betas(kind, betas)
}

impl DiffusionSchedule {
    pub fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::BadStepCount(betas.len()));
        }
        if betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::InvalidArgument("betas must lie in (0, 1)".into()));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(DiffusionSchedule {
            kind,
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `(coef_x0, coef_xn, variance)` of `q(x_{n−1} | x_n, x0)` for `1 ≤ n < N`.
    pub fn posterior_coefficients(&self, n: usize) -> (f64, f64, f64) {
        let ab = self.alpha_bars[n];
        let ab_prev = self.alpha_bars[n - 1];
        let beta = self.betas[n];
        let denom = 1.0 - ab;
        (
            ab_prev.sqrt() * beta / denom,
            self.alphas[n].sqrt() * (1.0 - ab_prev) / denom,
            beta * (1.0 - ab_prev) / denom,
        )
    }

    fn check_step(&self, n: usize, lo: usize) -> Result<()> {
        if n < lo || n >= self.steps() {
            return Err(Error::InvalidArgument(format!(
                "step {n} outside [{lo}, {})",
                self.steps()
            )));
        }
        Ok(())
    }
}

/// `√ᾱ_n · x0 + √(1 − ᾱ_n) · noise`.
pub fn q_sample<T: Real>(
    x0: &MotionTensor<T>,
    n: usize,
    noise: &MotionTensor<T>,
    s: &DiffusionSchedule,
) -> Result<MotionTensor<T>> {
    s.check_step(n, 0)?;
    x0.same_shape(noise)?;
    let a = T::of(s.alpha_bars[n].sqrt());
    let b = T::of((1.0 - s.alpha_bars[n]).sqrt());
    Ok(x0.zip_map(noise, |x, e| a * x + b * e))
}

/// One reverse step from `x_n` to `x_{n−1}` given a clean-sample estimate.
pub fn posterior_step<T: Real>(
    x_n: &MotionTensor<T>,
    x0_hat: &MotionTensor<T>,
    n: usize,
    s: &DiffusionSchedule,
    noise: &MotionTensor<T>,
) -> Result<MotionTensor<T>> {
    s.check_step(n, 1)?;
    x_n.same_shape(x0_hat)?;
    x_n.same_shape(noise)?;
    let (c0, cn, var) = s.posterior_coefficients(n);
    let (c0, cn, sigma) = (T::of(c0), T::of(cn), T::of(var.sqrt()));
    let mut out = x_n.clone();
    for ((o, x0), e) in out.data.iter_mut().zip(&x0_hat.data).zip(&noise.data) {
        *o = c0 * *x0 + cn * *o + sigma * *e;
    }
    Ok(out)
}
