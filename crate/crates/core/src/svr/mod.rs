//! ε-insensitive support vector regression with an RBF kernel, trained by
//! SMO, plus k-fold cross-validated grid search over `(C, γ)`.
//!
//! Inputs are snapped latent vectors, the same encoding the GP uses.

mod smo;

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

pub use smo::SmoDiagnostics;

/// Default insensitive-tube half-width, in quality units.
pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_GAMMA_GRID: [f64; 4] = [0.001, 0.01, 0.1, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrHyperparams {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl SvrHyperparams {
    pub fn new(c: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        let hp = Self { c, gamma, epsilon };
        hp.check()?;
        Ok(hp)
    }

    pub fn check(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.c) && ok(self.gamma) && ok(self.epsilon)) {
            return Err(Error::Config(format!("SVR hyperparameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoConfig {
    /// Stop when the maximal KKT violation drops below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// A fitted ε-SVR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub hyperparams: SvrHyperparams,
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i − α_i*` per support vector, each in `[−C, C]`.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub diagnostics: SmoDiagnostics,
}

impl SvrModel {
    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    /// `Σ coef_i · exp(−γ‖sv_i − x‖²) + b`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        let gamma = self.hyperparams.gamma;
        let sum: f64 = self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * rbf(sv, x, gamma))
            .sum();
        Ok(sum + self.bias)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

fn check_data(inputs: &[Vec<f64>], targets: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Config("SVR needs at least one training row".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let d = inputs[0].len();
    if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::Config("SVR training data must be finite".into()));
    }
    Ok(())
}

fn sq_distances(inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = inputs.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v: f64 = inputs[i].iter().zip(&inputs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Fits an ε-SVR on `(inputs, targets)`. Hitting the iteration cap is not an
/// error: the best iterate is returned with `converged == false`.
pub fn svr_fit(inputs: &[Vec<f64>], targets: &[f64], hp: &SvrHyperparams, cfg: &SmoConfig) -> Result<SvrModel> {
    check_data(inputs, targets)?;
    hp.check()?;
    let gram = sq_distances(inputs).map(|d2| (-hp.gamma * d2).exp());
    Ok(fit_gram(&gram, inputs, targets, hp, cfg))
}

fn fit_gram(
    gram: &DMatrix<f64>,
    inputs: &[Vec<f64>],
    targets: &[f64],
    hp: &SvrHyperparams,
    cfg: &SmoConfig,
) -> SvrModel {
    let out = smo::solve(gram, targets, hp.c, hp.epsilon, cfg.tolerance, cfg.max_iter);
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (x, c) in inputs.iter().zip(&out.coefficients) {
        if *c != 0.0 {
            support_vectors.push(x.clone());
            coefficients.push(*c);
        }
    }
    SvrModel {
        hyperparams: *hp,
        support_vectors,
        coefficients,
        bias: out.bias,
        diagnostics: SmoDiagnostics {
            iterations: out.iterations,
            converged: out.converged,
            kkt_gap: out.gap,
            dual_objective: out.objective,
        },
    }
}

/// Shuffles `0..n` and deals it into `k` folds whose sizes differ by at
/// most one. Each fold is returned sorted.
pub fn kfold_split<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub c: f64,
    pub gamma: f64,
    /// Mean of the per-fold held-out RMSE.
    pub rmse: f64,
    /// Mean of the per-fold held-out MSE.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: SvrHyperparams,
    pub cv_rmse: f64,
    pub cv_mse: f64,
    /// One cell per `(C, γ)` pair, C-major in grid order.
    pub table: Vec<CvCell>,
}

/// Grid search over `c_grid × gamma_grid` scored by k-fold CV RMSE.
///
/// The same folds are reused for every cell. The minimizing cell wins, ties
/// going to the smaller C and then the smaller γ.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_cv<R: Rng + ?Sized>(
    inputs: &[Vec<f64>],
    targets: &[f64],
    c_grid: &[f64],
    gamma_grid: &[f64],
    epsilon: f64,
    k: usize,
    smo: &SmoConfig,
    exec: Execution,
    rng: &mut R,
) -> Result<CvResult> {
    check_data(inputs, targets)?;
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::Config("grid search needs non-empty C and γ grids".into()));
    }
    for (&c, &g) in c_grid.iter().flat_map(|c| gamma_grid.iter().map(move |g| (c, g))) {
        SvrHyperparams::new(c, g, epsilon)?;
    }
    let folds = kfold_split(inputs.len(), k, rng)?;
    let dist = sq_distances(inputs);

    let cells: Vec<(f64, f64)> = c_grid
        .iter()
        .flat_map(|&c| gamma_grid.iter().map(move |&g| (c, g)))
        .collect();
    let table: Vec<CvCell> = exec.map(&cells, |&(c, gamma)| {
        let hp = SvrHyperparams { c, gamma, epsilon };
        let gram = dist.map(|d2| (-gamma * d2).exp());
        let (mut rmse_sum, mut mse_sum) = (0.0, 0.0);
        for held in &folds {
            let mut is_held = vec![false; inputs.len()];
            held.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<usize> = (0..inputs.len()).filter(|&i| !is_held[i]).collect();
            let sub = gram.select_rows(&train).select_columns(&train);
            let xs: Vec<Vec<f64>> = train.iter().map(|&i| inputs[i].clone()).collect();
            let ys: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
            let model = fit_gram(&sub, &xs, &ys, &hp, smo);
            let mse = held
                .iter()
                .map(|&i| {
                    let pred = model.predict(&inputs[i]).unwrap_or(f64::INFINITY);
                    (pred - targets[i]).powi(2)
                })
                .sum::<f64>()
                / held.len() as f64;
            rmse_sum += mse.sqrt();
            mse_sum += mse;
        }
        let folds_n = folds.len() as f64;
        let (rmse, mse) = (rmse_sum / folds_n, mse_sum / folds_n);
        CvCell {
            c,
            gamma,
            rmse: if rmse.is_finite() { rmse } else { f64::INFINITY },
            mse: if mse.is_finite() { mse } else { f64::INFINITY },
        }
    });

    let mut best = 0;
    for (i, cell) in table.iter().enumerate() {
        let incumbent = &table[best];
        let better = cell.rmse < incumbent.rmse
            || (cell.rmse == incumbent.rmse
                && (cell.c < incumbent.c || (cell.c == incumbent.c && cell.gamma < incumbent.gamma)));
        if better {
            best = i;
        }
    }
    let winner = &table[best];
    Ok(CvResult {
        best: SvrHyperparams {
            c: winner.c,
            gamma: winner.gamma,
            epsilon,
        },
        cv_rmse: winner.rmse,
        cv_mse: winner.mse,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 / (n - 1).max(1) as f64]).collect()
    }

    #[test]
    fn constant_targets_sit_inside_tube() {
        let xs = line(12);
        let ys = vec![4.2; 12];
        let m = svr_fit(
            &xs,
            &ys,
            &SvrHyperparams::new(1.0, 1.0, 0.5).unwrap(),
            &SmoConfig::default(),
        )
        .unwrap();
        assert!(m.coefficients.is_empty());
        assert!((m.bias - 4.2).abs() < 1e-12);
        assert!((m.predict(&[0.37]).unwrap() - 4.2).abs() < 1e-12);
    }

    #[test]
    fn single_row_is_within_tube() {
        let m = svr_fit(
            &[vec![0.3, 0.6]],
            &[7.0],
            &SvrHyperparams::new(1.0, 0.5, 0.5).unwrap(),
            &SmoConfig::default(),
        )
        .unwrap();
        assert!((m.predict(&[0.3, 0.6]).unwrap() - 7.0).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn fits_a_sine() {
        let xs = line(40);
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x[0]).sin()).collect();
        let hp = SvrHyperparams::new(10.0, 20.0, 0.01).unwrap();
        let m = svr_fit(&xs, &ys, &hp, &SmoConfig::default()).unwrap();
        assert!(m.converged());
        let rmse = (xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (m.predict(x).unwrap() - y).powi(2))
            .sum::<f64>()
            / 40.0)
            .sqrt();
        assert!(rmse <= 0.05, "{rmse}");
        assert!(m.coefficients.iter().all(|c| c.abs() <= 10.0 + 1e-8));
    }

    #[test]
    fn predict_examples() {
        let hp = SvrHyperparams::new(1.0, 3.0, 0.1).unwrap();
        let empty = SvrModel {
            hyperparams: hp,
            support_vectors: vec![],
            coefficients: vec![],
            bias: 2.5,
            diagnostics: SmoDiagnostics::default(),
        };
        assert_eq!(empty.predict(&[0.1, 0.2]).unwrap(), 2.5);
        let lone = SvrModel {
            support_vectors: vec![vec![0.4, 0.9]],
            coefficients: vec![0.7],
            bias: 0.0,
            ..empty.clone()
        };
        assert_eq!(lone.predict(&[0.4, 0.9]).unwrap(), 0.7);
        assert!(matches!(lone.predict(&[0.4]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn five_vector_model_matches_direct_sum() {
        let mut rng = seed::rng(77);
        let svs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let coefs: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let m = SvrModel {
            hyperparams: SvrHyperparams::new(1.0, 2.3, 0.1).unwrap(),
            support_vectors: svs.clone(),
            coefficients: coefs.clone(),
            bias: -0.4,
            diagnostics: SmoDiagnostics::default(),
        };
        let mut direct = -0.4;
        for (sv, c) in svs.iter().zip(&coefs) {
            let d2 = (sv[0] - x[0]).powi(2) + (sv[1] - x[1]).powi(2) + (sv[2] - x[2]).powi(2);
            direct += c * (-2.3 * d2).exp();
        }
        assert!((m.predict(&x).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn kfold_examples() {
        let mut rng = seed::rng(1);
        let ten = kfold_split(10, 10, &mut rng).unwrap();
        assert!(ten.iter().all(|f| f.len() == 1));
        let folds = kfold_split(45, 10, &mut rng).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![4, 4, 4, 4, 4, 5, 5, 5, 5, 5]);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..45).collect::<Vec<_>>());
        assert!(kfold_split(3, 4, &mut rng).is_err());
    }

    #[test]
    fn grid_search_picks_minimum() {
        let xs = line(30);
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 + 3.0 * (4.0 * x[0]).sin()).collect();
        let single = grid_search_cv(
            &xs,
            &ys,
            &[1.0],
            &[1.0],
            0.1,
            5,
            &SmoConfig::default(),
            Execution::Sequential,
            &mut seed::rng(3),
        )
        .unwrap();
        assert_eq!(single.table.len(), 1);
        assert_eq!(single.cv_rmse, single.table[0].rmse);

        let full = grid_search_cv(
            &xs,
            &ys,
            &DEFAULT_C_GRID,
            &DEFAULT_GAMMA_GRID,
            0.1,
            5,
            &SmoConfig::default(),
            Execution::Parallel,
            &mut seed::rng(3),
        )
        .unwrap();
        let min = full.table.iter().map(|c| c.rmse).fold(f64::INFINITY, f64::min);
        assert_eq!(full.cv_rmse, min);
        assert_eq!(full.table.len(), 16);
    }

    #[test]
    fn save_load_is_prediction_exact() {
        let xs = line(15);
        let ys: Vec<f64> = xs.iter().map(|x| (5.0 * x[0]).cos() * 3.0).collect();
        let m = svr_fit(
            &xs,
            &ys,
            &SvrHyperparams::new(5.0, 7.0, 0.05).unwrap(),
            &SmoConfig::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svr.json");
        m.save(&path).unwrap();
        let back = SvrModel::load(&path).unwrap();
        for x in line(37) {
            assert!((m.predict(&x).unwrap() - back.predict(&x).unwrap()).abs() <= 1e-12);
        }
    }
}
