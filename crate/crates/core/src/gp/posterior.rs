use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::kernel::{matern52_lengthscale_factor, matern52_scaled, scaled_sq_dist, KernelHyperparams};
use crate::error::{Error, Result};
use crate::space::LatentLayout;

/// Relative jitter schedule: starts at `1e-10·amplitude²` and grows tenfold
/// up to `1e-4·amplitude²`.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Variances in `[-VARIANCE_CLAMP_TOL, 0)` are rounding noise and clamp to 0.
const VARIANCE_CLAMP_TOL: f64 = 1e-10;

/// An exact GP posterior conditioned on snapped training inputs.
///
/// Targets are modelled around a constant `offset` (0 for [`fit`], the
/// target mean for [`fit_centered`]); predictions add it back.
///
/// [`fit`]: GpPosterior::fit
/// [`fit_centered`]: GpPosterior::fit_centered
#[derive(Debug, Clone)]
pub struct GpPosterior {
    layout: LatentLayout,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    offset: f64,
    hp: KernelHyperparams,
    /// Lower Cholesky factor of `K + (σ_n² + jitter) I`.
    chol: DMatrix<f64>,
    /// `(K + σ_n² I)⁻¹ (y - offset)`.
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpPosterior {
    /// Zero-mean GP fit.
    pub fn fit(layout: &LatentLayout, inputs: &[Vec<f64>], targets: &[f64], hp: &KernelHyperparams) -> Result<Self> {
        Self::fit_with_offset(layout, inputs, targets, hp, 0.0)
    }

    /// Fit around the empirical target mean.
    pub fn fit_centered(
        layout: &LatentLayout,
        inputs: &[Vec<f64>],
        targets: &[f64],
        hp: &KernelHyperparams,
    ) -> Result<Self> {
        let offset = if targets.is_empty() {
            0.0
        } else {
            targets.iter().sum::<f64>() / targets.len() as f64
        };
        Self::fit_with_offset(layout, inputs, targets, hp, offset)
    }

    pub fn fit_with_offset(
        layout: &LatentLayout,
        inputs: &[Vec<f64>],
        targets: &[f64],
        hp: &KernelHyperparams,
        offset: f64,
    ) -> Result<Self> {
        hp.check()?;
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if hp.dim() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                got: hp.dim(),
            });
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != layout.dim()) {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                got: bad.len(),
            });
        }
        if let Some(bad) = targets.iter().find(|y| !y.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite target {bad}")));
        }

        let inputs: Vec<Vec<f64>> = inputs.iter().map(|x| layout.snapped(x)).collect();
        let n = inputs.len();
        let gram = gram_matrix(&inputs, hp);
        let (chol, jitter) = factorize(gram, hp)?;
        let centered = DVector::from_iterator(n, targets.iter().map(|y| y - offset));
        let alpha = cholesky_solve(&chol, &centered);

        Ok(Self {
            layout: layout.clone(),
            inputs,
            targets: targets.to_vec(),
            offset,
            hp: hp.clone(),
            chol,
            alpha,
            jitter,
        })
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hp
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Predictive mean and variance at `x`, which is snapped first.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.dim(),
                got: x.len(),
            });
        }
        let snapped = self.layout.snapped(x);
        Ok(self.predict_snapped(&snapped))
    }

    /// [`predict`](Self::predict) for an input already snapped and of the
    /// right length.
    pub fn predict_snapped(&self, x: &[f64]) -> (f64, f64) {
        let n = self.inputs.len();
        let prior = self.hp.amplitude2;
        if n == 0 {
            return (self.offset, prior);
        }
        let mut v: Vec<f64> = self
            .inputs
            .iter()
            .map(|xi| matern52_scaled(scaled_sq_dist(x, xi, &self.hp.lengthscales), prior))
            .collect();
        let mean = self.offset + v.iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum::<f64>();

        // v ← L⁻¹ k*, column-oriented forward substitution
        let l = self.chol.as_slice();
        for j in 0..n {
            let col = &l[j * n..(j + 1) * n];
            v[j] /= col[j];
            let vj = v[j];
            for i in j + 1..n {
                v[i] -= col[i] * vj;
            }
        }
        let var = prior - v.iter().map(|t| t * t).sum::<f64>();
        let var = if var < 0.0 && var >= -VARIANCE_CLAMP_TOL * prior.max(1.0) {
            0.0
        } else {
            var.max(0.0)
        };
        (mean, var)
    }

    /// `−½ (y−m)ᵀα − Σ ln L_ii − (n/2) ln 2π`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.inputs.len();
        let fit: f64 = self
            .targets
            .iter()
            .zip(self.alpha.iter())
            .map(|(y, a)| (y - self.offset) * a)
            .sum();
        let log_det: f64 = (0..n).map(|i| self.chol[(i, i)].ln()).sum();
        -0.5 * fit - log_det - 0.5 * n as f64 * (2.0 * PI).ln()
    }

    /// Gradient of the log marginal likelihood with respect to
    /// [`KernelHyperparams::to_log`] coordinates, holding the jitter ratio
    /// fixed.
    pub fn lml_gradient(&self) -> Vec<f64> {
        let n = self.inputs.len();
        let d = self.hp.dim();
        let mut grad = vec![0.0; d + 2];
        if n == 0 {
            return grad;
        }
        let identity = DMatrix::<f64>::identity(n, n);
        let k_inv = cholesky_solve_matrix(&self.chol, identity);
        // W = ααᵀ − K⁻¹; ∂LML/∂θ = ½ tr(W ∂K/∂θ)
        let w = &self.alpha * self.alpha.transpose() - k_inv;

        let amp = self.hp.amplitude2;
        let jitter_ratio = self.jitter / amp;
        let ls = &self.hp.lengthscales;
        let mut g_amp = 0.0;
        for i in 0..n {
            g_amp += w[(i, i)] * amp * (1.0 + jitter_ratio);
            for j in 0..i {
                let r2 = scaled_sq_dist(&self.inputs[i], &self.inputs[j], ls);
                let wij = w[(i, j)];
                // factor 2 for the symmetric (j, i) entry
                g_amp += 2.0 * wij * matern52_scaled(r2, amp);
                let shared = 2.0 * wij * matern52_lengthscale_factor(r2, amp);
                for (k, l) in ls.iter().enumerate() {
                    let dk = (self.inputs[i][k] - self.inputs[j][k]) / l;
                    grad[1 + k] += shared * dk * dk;
                }
            }
        }
        grad[0] = g_amp;
        grad[d + 1] = self.hp.noise_variance * w.diagonal().sum();
        grad.iter_mut().for_each(|g| *g *= 0.5);
        grad
    }
}

fn gram_matrix(inputs: &[Vec<f64>], hp: &KernelHyperparams) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.amplitude2;
        for j in 0..i {
            let v = matern52_scaled(scaled_sq_dist(&inputs[i], &inputs[j], &hp.lengthscales), hp.amplitude2);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `gram + (σ_n² + jitter) I`, escalating the jitter on failure.
fn factorize(gram: DMatrix<f64>, hp: &KernelHyperparams) -> Result<(DMatrix<f64>, f64)> {
    let n = gram.nrows();
    let mut ratio = JITTER_START;
    loop {
        let jitter = ratio * hp.amplitude2;
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += hp.noise_variance + jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c.unpack(), jitter));
        }
        if ratio >= JITTER_MAX {
            return Err(Error::Factorization { jitter });
        }
        ratio *= 10.0;
    }
}

fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("non-singular factor");
    l.tr_solve_lower_triangular(&z).expect("non-singular factor")
}

fn cholesky_solve_matrix(l: &DMatrix<f64>, b: DMatrix<f64>) -> DMatrix<f64> {
    let z = l.solve_lower_triangular(&b).expect("non-singular factor");
    l.tr_solve_lower_triangular(&z).expect("non-singular factor")
}

/// Log marginal likelihood of a zero-mean GP with hyperparameters `hp`.
pub fn log_marginal_likelihood(
    layout: &LatentLayout,
    inputs: &[Vec<f64>],
    targets: &[f64],
    hp: &KernelHyperparams,
) -> Result<f64> {
    Ok(GpPosterior::fit(layout, inputs, targets, hp)?.log_marginal_likelihood())
}
