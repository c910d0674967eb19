use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Matérn-5/2 hyperparameters with one lengthscale per latent coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    /// Signal variance, in squared quality units.
    pub amplitude2: f64,
    pub lengthscales: Vec<f64>,
    /// Variance of the additive Gaussian observation noise.
    pub noise_variance: f64,
}

impl KernelHyperparams {
    pub fn new(amplitude2: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let hp = Self {
            amplitude2,
            lengthscales,
            noise_variance,
        };
        hp.check()?;
        Ok(hp)
    }

    /// Isotropic hyperparameters over `dim` coordinates.
    pub fn isotropic(amplitude2: f64, lengthscale: f64, noise_variance: f64, dim: usize) -> Result<Self> {
        Self::new(amplitude2, vec![lengthscale; dim], noise_variance)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn check(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.amplitude2) || !ok(self.noise_variance) || !self.lengthscales.iter().all(|l| ok(*l)) {
            return Err(Error::Config(format!(
                "kernel hyperparameters must be finite and positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `[ln amplitude², ln ℓ₁, …, ln ℓ_d, ln σ_n²]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.amplitude2.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            amplitude2: v[0].exp(),
            lengthscales: v[1..=d].iter().map(|x| x.exp()).collect(),
            noise_variance: v[d + 1].exp(),
        }
    }
}

/// Matérn-5/2 ARD covariance between two latent vectors.
pub fn matern52(a: &[f64], b: &[f64], hp: &KernelHyperparams) -> Result<f64> {
    if a.len() != b.len() || a.len() != hp.dim() {
        return Err(Error::DimensionMismatch {
            expected: hp.dim(),
            got: if a.len() != hp.dim() { a.len() } else { b.len() },
        });
    }
    Ok(matern52_scaled(scaled_sq_dist(a, b, &hp.lengthscales), hp.amplitude2))
}

#[inline]
pub(crate) fn scaled_sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum()
}

#[inline]
pub(crate) fn matern52_scaled(r2: f64, amplitude2: f64) -> f64 {
    let r = r2.sqrt();
    amplitude2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

/// `∂k/∂(ln ℓ_i) / (d_i / ℓ_i)²`: the factor shared by every lengthscale
/// derivative at scaled distance `r2`.
#[inline]
pub(crate) fn matern52_lengthscale_factor(r2: f64, amplitude2: f64) -> f64 {
    let r = r2.sqrt();
    amplitude2 * 5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_gives_amplitude() {
        let hp = KernelHyperparams::isotropic(2.5, 0.3, 0.1, 2).unwrap();
        assert_eq!(matern52(&[0.1, 0.7], &[0.1, 0.7], &hp).unwrap(), 2.5);
    }

    #[test]
    fn decays_at_long_range() {
        let hp = KernelHyperparams::isotropic(1.0, 0.01, 0.1, 1).unwrap();
        // r = 1 / 0.01 = 100
        assert!(matern52(&[0.0], &[1.0], &hp).unwrap() < 1e-80);
    }

    #[test]
    fn unit_distance_value() {
        // (1 + √5 + 5/3) e^{-√5}, evaluated independently at 50 digits:
        // 0.52399410883182031...
        let hp = KernelHyperparams::isotropic(1.0, 1.0, 0.1, 1).unwrap();
        let k = matern52(&[0.0], &[1.0], &hp).unwrap();
        assert!((k - 0.523_994_108_831_820_3).abs() < 1e-14, "{k}");
    }

    #[test]
    fn symmetric_and_checked() {
        let hp = KernelHyperparams::new(1.3, vec![0.2, 0.9], 0.1).unwrap();
        let (a, b) = ([0.1, 0.4], [0.8, 0.3]);
        assert_eq!(matern52(&a, &b, &hp).unwrap(), matern52(&b, &a, &hp).unwrap());
        assert!(matches!(
            matern52(&[0.1], &b, &hp),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(KernelHyperparams::new(0.0, vec![1.0], 0.1).is_err());
    }

    #[test]
    fn log_round_trip() {
        let hp = KernelHyperparams::new(1.3, vec![0.2, 0.9], 0.01).unwrap();
        let back = KernelHyperparams::from_log(&hp.to_log());
        assert!((back.amplitude2 - 1.3).abs() < 1e-12);
        assert!((back.lengthscales[1] - 0.9).abs() < 1e-12);
        assert!((back.noise_variance - 0.01).abs() < 1e-14);
    }
}
