//! Hyperparameter fitting: marginal-likelihood maximization and slice
//! sampling of the hyperparameter posterior, both in log space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelHyperparams;
use super::posterior::GpPosterior;
use crate::error::{Error, Result};
use crate::optim::{minimize_box, LbfgsConfig};
use crate::space::LatentLayout;

/// Floor on the target variance used to scale the bound box, so constant
/// targets still get a proper box.
const MIN_TARGET_VARIANCE: f64 = 1e-6;

/// Box on the hyperparameters. Amplitude and noise bounds are relative to
/// the target variance; lengthscales are in unit-cube coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperBounds {
    pub amplitude_factor: (f64, f64),
    pub lengthscale: (f64, f64),
    pub noise_min: f64,
    pub noise_max_factor: f64,
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            amplitude_factor: (1e-3, 1e3),
            lengthscale: (1e-3, 10.0),
            noise_min: 1e-8,
            noise_max_factor: 1.0,
        }
    }
}

impl HyperBounds {
    /// Lower and upper corners of the box in log coordinates.
    pub fn log_box(&self, targets: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
        let var = target_variance(targets);
        let mut lo = Vec::with_capacity(dim + 2);
        let mut hi = Vec::with_capacity(dim + 2);
        lo.push((self.amplitude_factor.0 * var).ln());
        hi.push((self.amplitude_factor.1 * var).ln());
        for _ in 0..dim {
            lo.push(self.lengthscale.0.ln());
            hi.push(self.lengthscale.1.ln());
        }
        let noise_hi = (self.noise_max_factor * var).max(self.noise_min * 10.0);
        lo.push(self.noise_min.ln());
        hi.push(noise_hi.ln());
        (lo, hi)
    }

    pub fn contains(&self, hp: &KernelHyperparams, targets: &[f64]) -> bool {
        let (lo, hi) = self.log_box(targets, hp.dim());
        let tol = 1e-9;
        hp.to_log()
            .iter()
            .zip(lo.iter().zip(&hi))
            .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    /// A central starting point: amplitude at the target variance, mid-range
    /// lengthscales, small noise.
    pub fn default_start(&self, targets: &[f64], dim: usize) -> Vec<f64> {
        let (lo, hi) = self.log_box(targets, dim);
        let var = target_variance(targets);
        let mut v = Vec::with_capacity(dim + 2);
        v.push(var.ln());
        v.extend(std::iter::repeat_n(0.3f64.ln(), dim));
        v.push((1e-2 * var).ln());
        clamp_into(&mut v, &lo, &hi);
        v
    }
}

fn target_variance(targets: &[f64]) -> f64 {
    if targets.len() < 2 {
        return 1.0;
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    var.max(MIN_TARGET_VARIANCE)
}

fn clamp_into(v: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..v.len() {
        v[i] = v[i].clamp(lo[i], hi[i]);
    }
}

fn draw_in_box<R: Rng + ?Sized>(rng: &mut R, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| l + (h - l) * rng.random::<f64>())
        .collect()
}

/// Negative LML and its gradient at log hyperparameters `theta`.
fn neg_lml(layout: &LatentLayout, inputs: &[Vec<f64>], targets: &[f64], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let hp = KernelHyperparams::from_log(theta);
    let post = GpPosterior::fit(layout, inputs, targets, &hp)?;
    let grad = post.lml_gradient().into_iter().map(|g| -g).collect();
    Ok((-post.log_marginal_likelihood(), grad))
}

/// Maximizes the log marginal likelihood by projected L-BFGS in log space,
/// restarting from `restarts` uniform draws inside the bound box, and
/// returns the best optimum found.
pub fn optimize_hyperparams<R: Rng + ?Sized>(
    layout: &LatentLayout,
    inputs: &[Vec<f64>],
    targets: &[f64],
    restarts: usize,
    bounds: &HyperBounds,
    rng: &mut R,
) -> Result<KernelHyperparams> {
    if inputs.len() < 2 {
        return Err(Error::Config(
            "hyperparameter fitting needs at least 2 observations".into(),
        ));
    }
    let (lo, hi) = bounds.log_box(targets, layout.dim());
    let cfg = LbfgsConfig {
        max_iters: 200,
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_err = None;
    for _ in 0..restarts.max(1) {
        let start = draw_in_box(rng, &lo, &hi);
        let objective = |theta: &[f64]| match neg_lml(layout, inputs, targets, theta) {
            Ok(v) => Some(v),
            Err(e) => {
                last_err = Some(e);
                None
            }
        };
        if let Some(m) = minimize_box(objective, &start, &lo, &hi, &cfg) {
            if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
                best = Some((m.value, m.x));
            }
        }
    }
    match best {
        Some((_, theta)) => Ok(KernelHyperparams::from_log(&theta)),
        None => Err(Error::HyperOptimization {
            restarts: restarts.max(1),
            last: Box::new(last_err.unwrap_or(Error::Factorization { jitter: f64::NAN })),
        }),
    }
}

/// Slice-sampling settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliceConfig {
    /// Sweeps discarded before the first sample of a fresh chain.
    pub burn_in: usize,
    /// Initial bracket width in log units.
    pub width: f64,
    /// Maximum step-out expansions per side.
    pub max_steps: usize,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            burn_in: 50,
            width: 1.0,
            max_steps: 8,
        }
    }
}

/// A persistent univariate slice-sampling chain over log hyperparameters.
///
/// The log density is the marginal likelihood plus a log-uniform prior
/// restricted to the bound box, i.e. the LML inside the box and `-∞`
/// outside.
#[derive(Debug, Clone)]
pub struct HyperChain {
    state: Option<Vec<f64>>,
    cfg: SliceConfig,
    bounds: HyperBounds,
}

impl HyperChain {
    pub fn new(bounds: HyperBounds, cfg: SliceConfig) -> Self {
        Self {
            state: None,
            cfg,
            bounds,
        }
    }

    pub fn is_started(&self) -> bool {
        self.state.is_some()
    }

    /// Runs `warmup` sweeps then collects one sample per sweep. A chain that
    /// has not been started yet also runs the configured burn-in first. The
    /// state is carried over to the next call, clamped into the (data
    /// dependent) bound box.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        layout: &LatentLayout,
        inputs: &[Vec<f64>],
        targets: &[f64],
        n_samples: usize,
        warmup: usize,
        rng: &mut R,
    ) -> Result<Vec<KernelHyperparams>> {
        if inputs.len() < 2 {
            return Err(Error::Config(
                "hyperparameter sampling needs at least 2 observations".into(),
            ));
        }
        let (lo, hi) = self.bounds.log_box(targets, layout.dim());
        let fresh = self.state.is_none();
        let mut theta = self
            .state
            .take()
            .unwrap_or_else(|| self.bounds.default_start(targets, layout.dim()));
        clamp_into(&mut theta, &lo, &hi);

        let log_density = |t: &[f64]| -> f64 {
            match GpPosterior::fit(layout, inputs, targets, &KernelHyperparams::from_log(t)) {
                Ok(p) => {
                    let v = p.log_marginal_likelihood();
                    if v.is_finite() {
                        v
                    } else {
                        f64::NEG_INFINITY
                    }
                }
                Err(_) => f64::NEG_INFINITY,
            }
        };
        let mut current = log_density(&theta);

        let sweeps_before = warmup + if fresh { self.cfg.burn_in } else { 0 };
        for _ in 0..sweeps_before {
            current = self.sweep(&mut theta, current, &lo, &hi, &log_density, rng);
        }
        let mut out = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            current = self.sweep(&mut theta, current, &lo, &hi, &log_density, rng);
            out.push(KernelHyperparams::from_log(&theta));
        }
        self.state = Some(theta);
        Ok(out)
    }

    fn sweep<R: Rng + ?Sized, F: Fn(&[f64]) -> f64>(
        &self,
        theta: &mut [f64],
        mut current: f64,
        lo: &[f64],
        hi: &[f64],
        log_density: &F,
        rng: &mut R,
    ) -> f64 {
        for i in 0..theta.len() {
            current = slice_step(theta, i, current, lo[i], hi[i], &self.cfg, log_density, rng);
        }
        current
    }
}

/// One univariate slice update of coordinate `i` (stepping out, then
/// shrinkage). Brackets are clipped to `[lo, hi]`, so the update never
/// leaves the box and never fails.
#[allow(clippy::too_many_arguments)]
fn slice_step<R: Rng + ?Sized, F: Fn(&[f64]) -> f64>(
    theta: &mut [f64],
    i: usize,
    current: f64,
    lo: f64,
    hi: f64,
    cfg: &SliceConfig,
    log_density: &F,
    rng: &mut R,
) -> f64 {
    let x0 = theta[i];
    let level = if current.is_finite() {
        current + rng.random::<f64>().max(f64::MIN_POSITIVE).ln()
    } else {
        f64::NEG_INFINITY
    };
    let eval_at = |x: f64, theta: &mut [f64]| {
        theta[i] = x;
        log_density(theta)
    };

    let mut left = x0 - cfg.width * rng.random::<f64>();
    let mut right = left + cfg.width;
    let mut steps_left = rng.random_range(0..=cfg.max_steps);
    let mut steps_right = cfg.max_steps - steps_left;
    while steps_left > 0 && left > lo && eval_at(left, theta) > level {
        left -= cfg.width;
        steps_left -= 1;
    }
    while steps_right > 0 && right < hi && eval_at(right, theta) > level {
        right += cfg.width;
        steps_right -= 1;
    }
    left = left.max(lo);
    right = right.min(hi);

    for _ in 0..200 {
        let x = left + (right - left) * rng.random::<f64>();
        let value = eval_at(x, theta);
        if value > level || (value == level && value.is_finite()) {
            return value;
        }
        if x < x0 {
            left = x;
        } else {
            right = x;
        }
    }
    theta[i] = x0;
    current
}

/// Draws `n_samples` hyperparameter sets from the posterior with a fresh
/// chain (burn-in included).
pub fn sample_hyperparams<R: Rng + ?Sized>(
    layout: &LatentLayout,
    inputs: &[Vec<f64>],
    targets: &[f64],
    n_samples: usize,
    bounds: &HyperBounds,
    cfg: &SliceConfig,
    rng: &mut R,
) -> Result<Vec<KernelHyperparams>> {
    HyperChain::new(*bounds, *cfg).sample(layout, inputs, targets, n_samples, 0, rng)
}
