//! Expected improvement, averaged over GP hyperparameter samples, and its
//! maximization by random-grid seeding plus local quasi-Newton refinement.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gp::{GpPosterior, KernelHyperparams};
use crate::optim::{fd_gradient, minimize_box, LbfgsConfig};
use crate::space::LatentLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Random snapped candidates scored to seed the local search.
    pub grid_size: usize,
    /// Iteration cap of the local refinement.
    pub local_steps: usize,
    /// Hyperparameter samples the acquisition is averaged over.
    pub n_gp_samples: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            grid_size: 1000,
            local_steps: 50,
            n_gp_samples: 10,
        }
    }
}

impl AcquisitionConfig {
    pub fn check(&self) -> Result<()> {
        if self.grid_size == 0 || self.n_gp_samples == 0 {
            return Err(Error::Config(
                "acquisition grid_size and n_gp_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Expected improvement over `incumbent` of a Gaussian prediction, for
/// maximization. Zero-variance predictions give the deterministic
/// improvement `max(mean - incumbent, 0)`.
pub fn expected_improvement(mean: f64, variance: f64, incumbent: f64) -> f64 {
    let gap = mean - incumbent;
    let sd = variance.max(0.0).sqrt();
    if sd == 0.0 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    (sd * (z * normal_cdf(z) + normal_pdf(z))).max(0.0)
}

/// GP posteriors for a set of hyperparameter samples over the same data.
#[derive(Debug, Clone)]
pub struct Ensemble {
    layout: LatentLayout,
    posteriors: Vec<GpPosterior>,
    incumbent: f64,
}

impl Ensemble {
    /// Fits one mean-centered posterior per hyperparameter sample. The
    /// incumbent is the best observed target.
    pub fn fit(
        layout: &LatentLayout,
        inputs: &[Vec<f64>],
        targets: &[f64],
        samples: &[KernelHyperparams],
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("at least one hyperparameter sample is required".into()));
        }
        if targets.is_empty() {
            return Err(Error::Config("acquisition needs at least one observation".into()));
        }
        let posteriors = samples
            .iter()
            .map(|hp| GpPosterior::fit_centered(layout, inputs, targets, hp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_posteriors(layout, posteriors, best(targets)))
    }

    pub fn from_posteriors(layout: &LatentLayout, posteriors: Vec<GpPosterior>, incumbent: f64) -> Self {
        Self {
            layout: layout.clone(),
            posteriors,
            incumbent,
        }
    }

    pub fn incumbent(&self) -> f64 {
        self.incumbent
    }

    pub fn posteriors(&self) -> &[GpPosterior] {
        &self.posteriors
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    /// Averaged EI at `x` (snapped first).
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.dim(),
                got: x.len(),
            });
        }
        Ok(self.value_snapped(&self.layout.snapped(x)))
    }

    /// Averaged EI at an already snapped `x`.
    pub fn value_snapped(&self, x: &[f64]) -> f64 {
        let total: f64 = self
            .posteriors
            .iter()
            .map(|p| {
                let (m, v) = p.predict_snapped(x);
                expected_improvement(m, v, self.incumbent)
            })
            .sum();
        total / self.posteriors.len() as f64
    }
}

fn best(ys: &[f64]) -> f64 {
    ys.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Mean EI over `samples` at `x`, each under its own posterior on
/// `(inputs, targets)`.
pub fn averaged_acquisition(
    layout: &LatentLayout,
    inputs: &[Vec<f64>],
    targets: &[f64],
    samples: &[KernelHyperparams],
    x: &[f64],
) -> Result<f64> {
    Ensemble::fit(layout, inputs, targets, samples)?.value(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximizer {
    /// Snapped latent maximizer.
    pub x: Vec<f64>,
    pub value: f64,
    /// Acquisition value of the best grid candidate.
    pub seed_value: f64,
}

/// Maximizes `acq` (evaluated on snapped inputs) over the latent cube.
///
/// Scores `grid_size` random snapped candidates, then refines the best one
/// along its real-valued coordinates with L-BFGS on finite-difference
/// gradients, holding integer and categorical blocks fixed. The refined
/// point is returned only if it improves on the seed.
pub fn maximize_acquisition<A, R>(
    layout: &LatentLayout,
    acq: A,
    cfg: &AcquisitionConfig,
    exec: Execution,
    rng: &mut R,
) -> Maximizer
where
    A: Fn(&[f64]) -> f64 + Sync + Send,
    R: Rng + ?Sized,
{
    let candidates: Vec<Vec<f64>> = (0..cfg.grid_size.max(1)).map(|_| layout.sample(rng)).collect();
    let scores = exec.map(&candidates, |c| acq(c));
    let mut best_idx = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best_idx] || (scores[best_idx].is_nan() && !s.is_nan()) {
            best_idx = i;
        }
    }
    let seed = candidates[best_idx].clone();
    let seed_value = scores[best_idx];

    let free: Vec<usize> = layout
        .continuous_mask()
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.then_some(i))
        .collect();
    if free.is_empty() || cfg.local_steps == 0 {
        return Maximizer {
            x: seed,
            value: seed_value,
            seed_value,
        };
    }

    let embed = |z: &[f64]| {
        let mut x = seed.clone();
        for (k, &i) in free.iter().enumerate() {
            x[i] = z[k].clamp(0.0, 1.0);
        }
        x
    };
    let neg = |z: &[f64]| {
        let v = acq(&embed(z));
        v.is_finite().then_some(-v)
    };
    let lower = vec![0.0; free.len()];
    let upper = vec![1.0; free.len()];
    let objective = |z: &[f64]| {
        let value = neg(z)?;
        let mut f = neg;
        let grad = fd_gradient(&mut f, z, &lower, &upper, 1e-6)?;
        Some((value, grad))
    };
    let z0: Vec<f64> = free.iter().map(|&i| seed[i]).collect();
    let lbfgs = LbfgsConfig {
        max_iters: cfg.local_steps,
        grad_tol: 1e-10,
        f_tol: 1e-12,
        ..Default::default()
    };

    if let Some(m) = minimize_box(objective, &z0, &lower, &upper, &lbfgs) {
        let mut refined = embed(&m.x);
        layout.snap(&mut refined);
        let value = acq(&refined);
        if value > seed_value {
            return Maximizer {
                x: refined,
                value,
                seed_value,
            };
        }
    }
    Maximizer {
        x: seed,
        value: seed_value,
        seed_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn ei_reference_values() {
        // E[max(Z, 0)] = 1/sqrt(2π) for Z ~ N(0, 1)
        assert!((expected_improvement(3.0, 1.0, 3.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement(1.0, 0.0, 2.0), 0.0);
        assert_eq!(expected_improvement(4.0, 0.0, 2.0), 2.0);
    }

    #[test]
    fn ei_is_monotone() {
        let mut prev = 0.0;
        for i in 0..200 {
            let m = -5.0 + i as f64 * 0.05;
            let ei = expected_improvement(m, 0.7, 0.0);
            assert!(ei >= prev && ei >= 0.0);
            prev = ei;
        }
        let mut prev = 0.0;
        for i in 1..200 {
            let ei = expected_improvement(-0.5, (i as f64 * 0.02).powi(2), 0.0);
            assert!(ei >= prev);
            prev = ei;
        }
    }

    fn toy() -> (LatentLayout, Vec<Vec<f64>>, Vec<f64>, Vec<KernelHyperparams>) {
        let layout = LatentLayout::continuous(1);
        let xs = vec![vec![0.1], vec![0.5], vec![0.9]];
        let ys = vec![1.0, 2.0, 0.5];
        let hps = vec![
            KernelHyperparams::isotropic(1.0, 0.2, 0.01, 1).unwrap(),
            KernelHyperparams::isotropic(0.5, 0.5, 0.1, 1).unwrap(),
            KernelHyperparams::isotropic(2.0, 0.1, 0.001, 1).unwrap(),
        ];
        (layout, xs, ys, hps)
    }

    #[test]
    fn averaging_examples() {
        let (layout, xs, ys, hps) = toy();
        let x = [0.3];
        let single = |hp: &KernelHyperparams| {
            let p = GpPosterior::fit_centered(&layout, &xs, &ys, hp).unwrap();
            let (m, v) = p.predict(&x).unwrap();
            expected_improvement(m, v, 2.0)
        };
        let one = averaged_acquisition(&layout, &xs, &ys, &hps[..1], &x).unwrap();
        assert_eq!(one, single(&hps[0]));
        let dup = vec![hps[0].clone(); 4];
        assert!((averaged_acquisition(&layout, &xs, &ys, &dup, &x).unwrap() - one).abs() < 1e-15);
        let hand = (single(&hps[0]) + single(&hps[1]) + single(&hps[2])) / 3.0;
        assert!((averaged_acquisition(&layout, &xs, &ys, &hps, &x).unwrap() - hand).abs() < 1e-15);
        let mut rev = hps.clone();
        rev.reverse();
        assert!((averaged_acquisition(&layout, &xs, &ys, &rev, &x).unwrap() - hand).abs() < 1e-15);
    }

    #[test]
    fn maximizes_quadratic() {
        let layout = LatentLayout::continuous(1);
        let cfg = AcquisitionConfig::default();
        let m = maximize_acquisition(
            &layout,
            |x| -(x[0] - 0.5).powi(2),
            &cfg,
            Execution::Sequential,
            &mut seed::rng(1),
        );
        assert!((m.x[0] - 0.5).abs() < 0.01, "{m:?}");
        assert!(m.value >= m.seed_value);
    }

    #[test]
    fn constant_acquisition_returns_valid_point() {
        let layout = crate::space::SearchSpace::new(vec![
            crate::space::VariableSpec::integer("k", 0, 4),
            crate::space::VariableSpec::categorical("c", &["a", "b", "c"]),
            crate::space::VariableSpec::real("t", 0.0, 1.0),
        ])
        .unwrap()
        .layout()
        .clone();
        let m = maximize_acquisition(
            &layout,
            |_| 1.0,
            &AcquisitionConfig::default(),
            Execution::Sequential,
            &mut seed::rng(2),
        );
        assert_eq!(layout.snapped(&m.x), m.x);
        assert!(m.x.iter().all(|c| (0.0..=1.0).contains(c)));
    }
}
