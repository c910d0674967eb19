//! The benchmark protocol: simulate a dataset, fit the SVR surrogate, then
//! race Bayesian optimization against random search and a fixed expert
//! recipe over many seeded replications.

mod export;
mod histogram;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::expert::{Benchmark, Dataset, DEFAULT_JURY, DEFAULT_N_SIM};
use crate::optimizer::{bo_run, random_search_run, recommend, Objective, OptimizationConfig, Trace};
use crate::seed::{self, SimRng};
use crate::space::{Point, SearchSpace};
use crate::svr::{
    grid_search_cv, svr_fit, CvResult, SmoConfig, SvrModel, DEFAULT_C_GRID, DEFAULT_EPSILON, DEFAULT_GAMMA_GRID,
};

pub use export::{export_report, render_svg};
pub use histogram::{bin_index, bins_of, histogram, most_voted_recipe, Bin, Histogram, RecipeEntry, DEFAULT_BINS};

pub const METHOD_BO: &str = "bo";
pub const METHOD_RS: &str = "random_search";
pub const METHOD_EXPERT: &str = "expert";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Shipped benchmark name, used when no benchmark file is given.
    pub benchmark: String,
    pub replications: usize,
    /// Objective evaluations per replication and method.
    pub iterations: usize,
    pub seed: u64,
    /// `budget` and `seed` are overridden per replication.
    pub optimizer: OptimizationConfig,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub epsilon: f64,
    pub folds: usize,
    pub smo: SmoConfig,
    pub n_sim: usize,
    pub jury_size: usize,
    pub bins: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: "hotdog".into(),
            replications: 100,
            iterations: 50,
            seed: 42,
            optimizer: OptimizationConfig::default(),
            c_grid: DEFAULT_C_GRID.to_vec(),
            gamma_grid: DEFAULT_GAMMA_GRID.to_vec(),
            epsilon: DEFAULT_EPSILON,
            folds: 10,
            smo: SmoConfig::default(),
            n_sim: DEFAULT_N_SIM,
            jury_size: DEFAULT_JURY,
            bins: DEFAULT_BINS,
            execution: Execution::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.iterations < self.optimizer.n_init {
            return Err(Error::Config(format!(
                "iterations ({}) must be at least n_init ({})",
                self.iterations, self.optimizer.n_init
            )));
        }
        if self.bins == 0 || self.folds < 2 || self.jury_size == 0 {
            return Err(Error::Config("bins, jury_size must be >= 1 and folds >= 2".into()));
        }
        self.run_config(0).check()
    }

    /// Optimizer settings of replication `r`.
    pub fn run_config(&self, r: usize) -> OptimizationConfig {
        OptimizationConfig {
            budget: self.iterations,
            seed: replication_seed(self.seed, r),
            ..self.optimizer.clone()
        }
    }
}

pub fn replication_seed(master: u64, r: usize) -> u64 {
    seed::derive(master, seed::stream::REPLICATION, r as u64)
}

pub fn dataset_seed(master: u64) -> u64 {
    seed::derive(master, seed::stream::DATASET, 0)
}

pub fn cv_seed(master: u64) -> u64 {
    seed::derive(master, seed::stream::CV_FOLDS, 0)
}

/// The fitted SVR as a deterministic quality function over points.
#[derive(Debug, Clone)]
pub struct SurrogateObjective {
    pub space: SearchSpace,
    pub model: SvrModel,
}

impl SurrogateObjective {
    /// NaN for points outside the space, which aborts the run.
    pub fn predict(&self, point: &Point) -> f64 {
        self.space
            .to_latent(point)
            .and_then(|x| self.model.predict(&x))
            .unwrap_or(f64::NAN)
    }
}

impl Objective for SurrogateObjective {
    fn evaluate(&self, point: &Point, _rng: &mut SimRng) -> f64 {
        self.predict(point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSummary {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub cv_rmse: f64,
    pub cv_mse: f64,
    pub rows: usize,
    pub support_vectors: usize,
    pub converged: bool,
    pub cv_table: Vec<crate::svr::CvCell>,
}

/// Grid-searches `(C, γ)` on `data` and refits the winner on all rows.
pub fn fit_surrogate(space: &SearchSpace, data: &Dataset, cfg: &ExperimentConfig) -> Result<(SvrModel, CvResult)> {
    let inputs = data.inputs(space)?;
    let targets = data.targets();
    let mut rng = seed::rng(cv_seed(cfg.seed));
    let cv = grid_search_cv(
        &inputs,
        &targets,
        &cfg.c_grid,
        &cfg.gamma_grid,
        cfg.epsilon,
        cfg.folds,
        &cfg.smo,
        cfg.execution,
        &mut rng,
    )?;
    let model = svr_fit(&inputs, &targets, &cv.best, &cfg.smo)?;
    Ok((model, cv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub index: usize,
    pub seed: u64,
    pub bo_best: Vec<f64>,
    pub bo_raw: Vec<f64>,
    pub rs_best: Vec<f64>,
    pub rs_raw: Vec<f64>,
    /// Best observed BO point and its surrogate quality.
    pub recommendation: Point,
    pub recommended_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: String,
    pub mean: Vec<f64>,
    /// Sample standard deviation; zero for a single replication.
    pub std: Vec<f64>,
}

impl MethodCurve {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("curves are non-empty")
    }
}

/// Two-sided sign test of `BO final − RS final` across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

impl SignTest {
    /// Ties are dropped. With no untied pairs the p-value is 1.
    pub fn from_differences(diffs: &[f64]) -> Self {
        let wins = diffs.iter().filter(|d| **d > 0.0).count();
        let losses = diffs.iter().filter(|d| **d < 0.0).count();
        let ties = diffs.len() - wins - losses;
        let n = (wins + losses) as u64;
        let p_value = if n == 0 {
            1.0
        } else {
            let k = wins.min(losses) as u64;
            let bin = Binomial::new(0.5, n).expect("valid binomial");
            (2.0 * bin.cdf(k)).min(1.0)
        };
        Self {
            wins,
            losses,
            ties,
            p_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMatch {
    pub variable: String,
    pub bin: String,
    pub overlaps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub benchmark: String,
    pub config: ExperimentConfig,
    pub space: SearchSpace,
    pub dataset_seed: u64,
    pub cv_seed: u64,
    pub surrogate: SurrogateSummary,
    pub expert_point: Point,
    pub expert_quality: f64,
    /// Best-so-far curves of `bo`, `random_search` and `expert`.
    pub curves: Vec<MethodCurve>,
    /// Per-iteration observed quality of `bo` and `random_search`.
    pub raw_curves: Vec<MethodCurve>,
    pub histograms: Vec<Histogram>,
    pub recipe: Vec<RecipeEntry>,
    pub reference: Vec<ReferenceMatch>,
    pub sign_test: SignTest,
    pub replications: Vec<ReplicationResult>,
}

impl ExperimentReport {
    pub fn curve(&self, method: &str) -> Option<&MethodCurve> {
        self.curves.iter().find(|c| c.method == method)
    }

    pub fn reference_hits(&self) -> usize {
        self.reference.iter().filter(|r| r.overlaps).count()
    }

    pub fn recommendations(&self) -> Vec<Point> {
        self.replications.iter().map(|r| r.recommendation.clone()).collect()
    }
}

/// Mean and sample standard deviation per column, summed in row order.
pub fn aggregate(method: &str, curves: &[&[f64]]) -> MethodCurve {
    let n = curves.len();
    let len = curves.first().map_or(0, |c| c.len());
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for t in 0..len {
        let m = curves.iter().map(|c| c[t]).sum::<f64>() / n as f64;
        mean[t] = m;
        if n > 1 {
            let ss: f64 = curves.iter().map(|c| (c[t] - m).powi(2)).sum();
            std[t] = (ss / (n - 1) as f64).sqrt();
        }
    }
    MethodCurve {
        method: method.to_string(),
        mean,
        std,
    }
}

/// Progress events emitted while an experiment runs.
#[derive(Debug, Clone)]
pub enum Progress {
    Dataset {
        rows: usize,
    },
    Surrogate {
        c: f64,
        gamma: f64,
        cv_rmse: f64,
    },
    Replication {
        index: usize,
        total: usize,
        bo_final: f64,
        rs_final: f64,
    },
}

/// Runs the shipped benchmark named in `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let bench = Benchmark::by_name(&cfg.benchmark)?;
    run_benchmark(&bench, cfg, &|_| {})
}

/// Runs the full protocol on `bench`.
pub fn run_benchmark(
    bench: &Benchmark,
    cfg: &ExperimentConfig,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<ExperimentReport> {
    cfg.check()?;
    let space = bench.space();

    let data = bench
        .dataset(cfg.n_sim, cfg.jury_size, &mut seed::rng(dataset_seed(cfg.seed)))
        .map_err(|e| e.in_stage("dataset"))?;
    progress(Progress::Dataset { rows: data.len() });

    let (model, cv) = fit_surrogate(space, &data, cfg).map_err(|e| e.in_stage("surrogate"))?;
    progress(Progress::Surrogate {
        c: cv.best.c,
        gamma: cv.best.gamma,
        cv_rmse: cv.cv_rmse,
    });
    let surrogate = SurrogateSummary {
        c: cv.best.c,
        gamma: cv.best.gamma,
        epsilon: cv.best.epsilon,
        cv_rmse: cv.cv_rmse,
        cv_mse: cv.cv_mse,
        rows: data.len(),
        support_vectors: model.support_vectors.len(),
        converged: model.converged(),
        cv_table: cv.table,
    };
    let objective = SurrogateObjective {
        space: space.clone(),
        model,
    };

    // Replications fan out; each run then stays sequential inside.
    let inner = match cfg.execution {
        Execution::Parallel => Execution::Sequential,
        Execution::Sequential => cfg.optimizer.execution,
    };
    let results = cfg
        .execution
        .map_range(cfg.replications, |r| -> Result<ReplicationResult> {
            let run_cfg = OptimizationConfig {
                execution: inner,
                ..cfg.run_config(r)
            };
            let bo = bo_run(&objective, space, &run_cfg)?;
            let rs = random_search_run(&objective, space, &run_cfg)?;
            let out = replication_result(r, run_cfg.seed, &bo, &rs)?;
            progress(Progress::Replication {
                index: r,
                total: cfg.replications,
                bo_final: *out.bo_best.last().expect("non-empty"),
                rs_final: *out.rs_best.last().expect("non-empty"),
            });
            Ok(out)
        });
    let replications = results
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("optimize"))?;

    let expert_quality = objective.predict(&bench.expert_point);
    if !expert_quality.is_finite() {
        return Err(Error::NonFiniteObjective {
            point: bench.expert_point.to_string(),
            value: expert_quality,
        }
        .in_stage("expert"));
    }
    let expert_curve = vec![expert_quality; cfg.iterations];

    let column = |f: fn(&ReplicationResult) -> &Vec<f64>| -> Vec<&[f64]> {
        replications.iter().map(|r| f(r).as_slice()).collect()
    };
    let curves = vec![
        aggregate(METHOD_BO, &column(|r| &r.bo_best)),
        aggregate(METHOD_RS, &column(|r| &r.rs_best)),
        aggregate(METHOD_EXPERT, &vec![expert_curve.as_slice(); cfg.replications]),
    ];
    let raw_curves = vec![
        aggregate(METHOD_BO, &column(|r| &r.bo_raw)),
        aggregate(METHOD_RS, &column(|r| &r.rs_raw)),
    ];

    let recs: Vec<Point> = replications.iter().map(|r| r.recommendation.clone()).collect();
    let histograms = space
        .variables()
        .iter()
        .map(|v| histogram(space, &recs, &v.name, cfg.bins))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("report"))?;
    let recipe = most_voted_recipe(space, &recs, cfg.bins).map_err(|e| e.in_stage("report"))?;
    let reference = recipe
        .iter()
        .zip(&bench.reference)
        .map(|(entry, cond)| ReferenceMatch {
            variable: entry.variable.clone(),
            bin: entry.bin.label(),
            overlaps: entry.bin.overlaps(cond),
        })
        .collect();
    let diffs: Vec<f64> = replications
        .iter()
        .map(|r| r.bo_best.last().expect("non-empty") - r.rs_best.last().expect("non-empty"))
        .collect();

    Ok(ExperimentReport {
        benchmark: bench.name.clone(),
        config: cfg.clone(),
        space: space.clone(),
        dataset_seed: dataset_seed(cfg.seed),
        cv_seed: cv_seed(cfg.seed),
        surrogate,
        expert_point: bench.expert_point.clone(),
        expert_quality,
        curves,
        raw_curves,
        histograms,
        recipe,
        reference,
        sign_test: SignTest::from_differences(&diffs),
        replications,
    })
}

fn replication_result(index: usize, seed: u64, bo: &Trace, rs: &Trace) -> Result<ReplicationResult> {
    let (recommendation, recommended_quality) = recommend(bo)?;
    Ok(ReplicationResult {
        index,
        seed,
        bo_best: bo.best_curve(),
        bo_raw: bo.raw_curve(),
        rs_best: rs.best_curve(),
        rs_raw: rs.raw_curve(),
        recommendation,
        recommended_quality,
    })
}
