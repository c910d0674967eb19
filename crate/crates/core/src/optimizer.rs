//! The sequential optimization loop, the random-search baseline, and the
//! best-observed recommendation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::acquisition::{maximize_acquisition, AcquisitionConfig, Ensemble};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gp::{optimize_hyperparams, HyperBounds, HyperChain, KernelHyperparams, SliceConfig};
use crate::seed::{self, SimRng};
use crate::space::{Point, SearchSpace};

/// A quality function over points. Stochastic objectives draw their noise
/// from the supplied generator, which is a stream separate from the
/// optimizer's own.
pub trait Objective: Sync {
    fn evaluate(&self, point: &Point, rng: &mut SimRng) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&Point) -> f64 + Sync,
{
    fn evaluate(&self, point: &Point, _rng: &mut SimRng) -> f64 {
        self(point)
    }
}

/// How GP hyperparameters are chosen at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum HyperStrategy {
    /// Slice-sample `n_gp_samples` hyperparameter sets from a chain that
    /// persists across iterations, running `warmup` extra sweeps before each
    /// batch.
    Sample {
        #[serde(default)]
        slice: SliceConfig,
        #[serde(default = "default_warmup")]
        warmup: usize,
    },
    /// Use the single marginal-likelihood maximizer.
    Optimize { restarts: usize },
}

fn default_warmup() -> usize {
    1
}

impl Default for HyperStrategy {
    fn default() -> Self {
        HyperStrategy::Sample {
            slice: SliceConfig {
                burn_in: 20,
                ..Default::default()
            },
            warmup: default_warmup(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizationConfig {
    /// Total objective evaluations.
    pub budget: usize,
    /// Initial uniform evaluations before the first GP step.
    pub n_init: usize,
    pub seed: u64,
    pub acquisition: AcquisitionConfig,
    pub hyper: HyperStrategy,
    pub bounds: HyperBounds,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            budget: 50,
            n_init: 3,
            seed: 42,
            acquisition: AcquisitionConfig::default(),
            hyper: HyperStrategy::default(),
            bounds: HyperBounds::default(),
            execution: Execution::default(),
        }
    }
}

impl OptimizationConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_init == 0 || self.n_init > self.budget {
            return Err(Error::Config(format!(
                "need 1 <= n_init <= budget, got n_init {} and budget {}",
                self.n_init, self.budget
            )));
        }
        self.acquisition.check()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based evaluation index.
    pub iteration: usize,
    pub point: Point,
    pub y: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, point: Point, y: f64) {
        let best = self.records.last().map_or(y, |r| r.best_so_far.max(y));
        self.records.push(TraceRecord {
            iteration: self.records.len() + 1,
            point,
            y,
            best_so_far: best,
        });
    }

    pub fn best_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }

    pub fn raw_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    /// CSV with columns `iteration`, one per variable, `y`, `best_so_far`.
    pub fn write_csv<W: Write>(&self, space: &SearchSpace, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string()];
        header.extend(space.variables().iter().map(|v| v.name.clone()));
        header.push("y".into());
        header.push("best_so_far".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.point.0.iter().map(|v| v.to_string()));
            row.push(r.y.to_string());
            row.push(r.best_so_far.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("trace csv", e))?;
        Ok(())
    }
}

fn evaluate<O: Objective + ?Sized>(objective: &O, point: Point, noise: &mut SimRng, trace: &mut Trace) -> Result<()> {
    let y = objective.evaluate(&point, noise);
    if !y.is_finite() {
        return Err(Error::NonFiniteObjective {
            point: point.to_string(),
            value: y,
        });
    }
    trace.push(point, y);
    Ok(())
}

/// Runs Bayesian optimization for `cfg.budget` evaluations.
///
/// The first `cfg.n_init` points are uniform draws from the run's generator,
/// so a [`random_search_run`] with the same seed starts with the same
/// points. Each later iteration refits the GP hyperparameters on the
/// mean-centered observations, maximizes the averaged expected improvement
/// and evaluates the decoded maximizer.
pub fn bo_run<O: Objective + ?Sized>(objective: &O, space: &SearchSpace, cfg: &OptimizationConfig) -> Result<Trace> {
    cfg.check()?;
    let mut rng = seed::rng(cfg.seed);
    let mut noise = seed::rng(seed::derive(cfg.seed, seed::stream::OBJECTIVE_NOISE, 0));
    let mut trace = Trace::default();
    for point in space.sample_uniform(&mut rng, cfg.n_init) {
        evaluate(objective, point, &mut noise, &mut trace)?;
    }

    let layout = space.layout();
    let mut inputs: Vec<Vec<f64>> = trace
        .records
        .iter()
        .map(|r| space.to_latent(&r.point).map(|v| v.into_inner()))
        .collect::<Result<_>>()?;
    let mut chain = match cfg.hyper {
        HyperStrategy::Sample { slice, .. } => Some(HyperChain::new(cfg.bounds, slice)),
        HyperStrategy::Optimize { .. } => None,
    };

    while trace.len() < cfg.budget {
        let targets = trace.raw_curve();
        let samples = hyper_samples(cfg, chain.as_mut(), layout, &inputs, &targets, &mut rng)?;
        let ensemble = Ensemble::fit(layout, &inputs, &targets, &samples)?;
        let best = maximize_acquisition(
            layout,
            |x| ensemble.value_snapped(x),
            &cfg.acquisition,
            cfg.execution,
            &mut rng,
        );
        let point = space.from_latent(&best.x)?;
        inputs.push(space.to_latent(&point)?.into_inner());
        evaluate(objective, point, &mut noise, &mut trace)?;
    }
    Ok(trace)
}

fn hyper_samples(
    cfg: &OptimizationConfig,
    chain: Option<&mut HyperChain>,
    layout: &crate::space::LatentLayout,
    inputs: &[Vec<f64>],
    targets: &[f64],
    rng: &mut SimRng,
) -> Result<Vec<KernelHyperparams>> {
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let centered: Vec<f64> = targets.iter().map(|y| y - mean).collect();
    match (cfg.hyper, chain) {
        (HyperStrategy::Sample { warmup, .. }, Some(chain)) => {
            let warmup = if chain.is_started() { warmup } else { 0 };
            chain.sample(layout, inputs, &centered, cfg.acquisition.n_gp_samples, warmup, rng)
        }
        (HyperStrategy::Optimize { restarts }, _) => Ok(vec![optimize_hyperparams(
            layout,
            inputs,
            &centered,
            restarts,
            &cfg.bounds,
            rng,
        )?]),
        (HyperStrategy::Sample { .. }, None) => unreachable!("chain created for sampling strategy"),
    }
}

/// Evaluates `cfg.budget` uniform random points.
pub fn random_search_run<O: Objective + ?Sized>(
    objective: &O,
    space: &SearchSpace,
    cfg: &OptimizationConfig,
) -> Result<Trace> {
    cfg.check()?;
    let mut rng = seed::rng(cfg.seed);
    let mut noise = seed::rng(seed::derive(cfg.seed, seed::stream::OBJECTIVE_NOISE, 0));
    let mut trace = Trace::default();
    for point in space.sample_uniform(&mut rng, cfg.budget) {
        evaluate(objective, point, &mut noise, &mut trace)?;
    }
    Ok(trace)
}

/// The best observed point; the earliest wins ties.
pub fn recommend(trace: &Trace) -> Result<(Point, f64)> {
    let mut best: Option<&TraceRecord> = None;
    for r in &trace.records {
        if best.is_none_or(|b| r.y > b.y) {
            best = Some(r);
        }
    }
    best.map(|r| (r.point.clone(), r.y))
        .ok_or_else(|| Error::Config("cannot recommend from an empty trace".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Value, VariableSpec};

    fn line() -> SearchSpace {
        SearchSpace::new(vec![VariableSpec::real("x", 0.0, 1.0)]).unwrap()
    }

    fn x_of(p: &Point) -> f64 {
        p.0[0].as_f64().unwrap()
    }

    fn small_cfg(budget: usize, seed: u64) -> OptimizationConfig {
        OptimizationConfig {
            budget,
            n_init: 3,
            seed,
            acquisition: AcquisitionConfig {
                grid_size: 200,
                local_steps: 20,
                n_gp_samples: 3,
            },
            ..Default::default()
        }
    }

    #[test]
    fn budget_equal_to_init_is_random_design() {
        let f = |p: &Point| -(x_of(p) - 0.5).powi(2);
        let cfg = small_cfg(3, 5);
        let bo = bo_run(&f, &line(), &cfg).unwrap();
        let rs = random_search_run(&f, &line(), &cfg).unwrap();
        assert_eq!(bo, rs);
    }

    #[test]
    fn concave_objective_is_found() {
        let f = |p: &Point| -(x_of(p) - 0.5).powi(2);
        let trace = bo_run(&f, &line(), &small_cfg(20, 1)).unwrap();
        assert_eq!(trace.len(), 20);
        let (p, _) = recommend(&trace).unwrap();
        assert!((x_of(&p) - 0.5).abs() < 0.05, "{p}");
    }

    #[test]
    fn runs_are_seeded() {
        let f = |p: &Point| (3.0 * x_of(p)).sin();
        let a = bo_run(&f, &line(), &small_cfg(8, 3)).unwrap();
        let b = bo_run(&f, &line(), &small_cfg(8, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shares_initial_design_with_random_search() {
        let f = |p: &Point| x_of(p);
        let cfg = small_cfg(6, 8);
        let bo = bo_run(&f, &line(), &cfg).unwrap();
        let rs = random_search_run(&f, &line(), &cfg).unwrap();
        assert_eq!(bo.records[..3], rs.records[..3]);
    }

    #[test]
    fn non_finite_objective_aborts() {
        let f = |_: &Point| f64::NAN;
        let err = random_search_run(&f, &line(), &small_cfg(3, 1)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteObjective { .. }));
    }

    #[test]
    fn config_is_checked() {
        let f = |_: &Point| 0.0;
        let mut cfg = small_cfg(2, 1);
        cfg.n_init = 3;
        assert!(bo_run(&f, &line(), &cfg).is_err());
        cfg.n_init = 0;
        assert!(random_search_run(&f, &line(), &cfg).is_err());
    }

    #[test]
    fn recommend_examples() {
        let mut t = Trace::default();
        assert!(recommend(&t).is_err());
        for (i, y) in [2.0, 7.0, 5.0].into_iter().enumerate() {
            t.push(Point(vec![Value::Real(i as f64)]), y);
        }
        assert_eq!(recommend(&t).unwrap(), (Point(vec![Value::Real(1.0)]), 7.0));
        assert_eq!(t.best_curve(), vec![2.0, 7.0, 7.0]);

        let mut tie = Trace::default();
        tie.push(Point(vec![Value::Real(0.0)]), 7.0);
        tie.push(Point(vec![Value::Real(1.0)]), 7.0);
        assert_eq!(recommend(&tie).unwrap().0, Point(vec![Value::Real(0.0)]));
    }

    #[test]
    fn optimize_strategy_runs() {
        let f = |p: &Point| -(x_of(p) - 0.3).powi(2);
        let mut cfg = small_cfg(6, 2);
        cfg.hyper = HyperStrategy::Optimize { restarts: 2 };
        assert_eq!(bo_run(&f, &line(), &cfg).unwrap().len(), 6);
    }

    #[test]
    fn trace_csv_layout() {
        let f = |p: &Point| x_of(p);
        let t = random_search_run(&f, &line(), &small_cfg(3, 1)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&line(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,x,y,best_so_far\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
