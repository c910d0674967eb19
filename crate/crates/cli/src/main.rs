//! `simbo` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use simbo::expert::{load_real_dataset, Benchmark, Dataset, DEFAULT_JURY, DEFAULT_N_SIM};
use simbo::harness::{
    export_report, fit_surrogate, run_benchmark, ExperimentConfig, ExperimentReport, Progress, SurrogateObjective,
};
use simbo::optimizer::{bo_run, recommend, OptimizationConfig};
use simbo::svr::SvrModel;
use simbo::{seed, SearchSpace};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "simbo",
    version,
    about = "Bayesian optimization of recipes over simulated expert knowledge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a search-space or benchmark file.
    SpaceValidate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a simulated dataset from a benchmark's quality model.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Single-taster rows drawn at random points.
        #[arg(long, default_value_t = DEFAULT_N_SIM)]
        n_sim: usize,
        #[arg(long, default_value_t = DEFAULT_JURY)]
        jury: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search and fit the SVR surrogate.
    SurrogateFit {
        #[command(flatten)]
        source: Source,
        /// Dataset CSV to train on instead of a freshly simulated one.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One Bayesian optimization run against a surrogate.
    Optimize {
        /// Benchmark file, or a plain space file when --model is given.
        #[arg(long)]
        config: PathBuf,
        /// Saved surrogate; fitted from simulated data when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full experiment: BO vs random search vs the expert recipe.
    Benchmark {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long, default_value_t = 100)]
        replications: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-export the files of a saved report.json.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Shipped benchmark.
    #[arg(long, value_parser = ["hotdog", "cesar"])]
    benchmark: Option<String>,
    /// Benchmark file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> simbo::Result<Benchmark> {
        match (&self.benchmark, &self.config) {
            (Some(name), _) => Benchmark::by_name(name),
            (None, Some(path)) => Benchmark::load(path),
            (None, None) => unreachable!("clap enforces the group"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            let line = json!({ "error": { "kind": kind, "message": message(&err) } });
            eprintln!("{line}");
            ExitCode::from(code)
        }
    }
}

/// The error chain joined with ": ", skipping causes a parent already printed.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    let validation = err
        .chain()
        .find_map(|e| e.downcast_ref::<simbo::Error>())
        .is_some_and(simbo::Error::is_validation);
    if validation {
        ("validation", 1)
    } else {
        ("runtime", 2)
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::SpaceValidate { config } => space_validate(&config),
        Command::Simulate {
            source,
            seed,
            n_sim,
            jury,
            out,
        } => simulate(&source.load()?, seed, n_sim, jury, &out),
        Command::SurrogateFit {
            source,
            data,
            seed,
            out,
        } => surrogate_fit(&source.load()?, data.as_deref(), seed, &out),
        Command::Optimize {
            config,
            model,
            seed,
            iterations,
            out,
        } => optimize(&config, model.as_deref(), seed, iterations, &out),
        Command::Benchmark {
            source,
            seed,
            iterations,
            replications,
            out,
        } => benchmark(&source.load()?, seed, iterations, replications, &out),
        Command::Report { config, out } => report(&config, &out),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: PathBuf, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn pretty(value: &impl serde::Serialize) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn space_validate(config: &Path) -> anyhow::Result<()> {
    let space = SearchSpace::from_json(&read(config)?)?;
    println!(
        "{}: {} variables, latent dimension {}",
        config.display(),
        space.len(),
        space.latent_dim()
    );
    Ok(())
}

fn experiment_config(bench: &Benchmark, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        benchmark: bench.name.clone(),
        seed,
        ..Default::default()
    }
}

fn simulated(bench: &Benchmark, cfg: &ExperimentConfig) -> simbo::Result<Dataset> {
    bench.dataset(
        cfg.n_sim,
        cfg.jury_size,
        &mut seed::rng(simbo::harness::dataset_seed(cfg.seed)),
    )
}

fn simulate(bench: &Benchmark, seed: u64, n_sim: usize, jury: usize, out: &Path) -> anyhow::Result<()> {
    let cfg = ExperimentConfig {
        n_sim,
        jury_size: jury,
        ..experiment_config(bench, seed)
    };
    let data = simulated(bench, &cfg).map_err(|e| e.in_stage("simulate"))?;
    out_dir(out)?;
    let mut bytes = Vec::new();
    data.write_csv(bench.space(), &mut bytes)?;
    write(out.join("dataset.csv"), &bytes)?;
    eprintln!("wrote {} rows to {}", data.len(), out.join("dataset.csv").display());
    Ok(())
}

fn surrogate_fit(bench: &Benchmark, data: Option<&Path>, seed: u64, out: &Path) -> anyhow::Result<()> {
    let cfg = experiment_config(bench, seed);
    let data = match data {
        Some(path) => load_real_dataset(path, bench.space()).map_err(|e| e.in_stage("dataset"))?,
        None => simulated(bench, &cfg).map_err(|e| e.in_stage("dataset"))?,
    };
    let (model, cv) = fit_surrogate(bench.space(), &data, &cfg).map_err(|e| e.in_stage("surrogate"))?;
    out_dir(out)?;
    model.save(&out.join("model.json"))?;
    write(out.join("cv.json"), &pretty(&cv)?)?;
    eprintln!(
        "C = {}, gamma = {}, cv_rmse = {:.4} on {} rows",
        cv.best.c,
        cv.best.gamma,
        cv.cv_rmse,
        data.len()
    );
    Ok(())
}

fn optimize(config: &Path, model: Option<&Path>, seed: u64, iterations: usize, out: &Path) -> anyhow::Result<()> {
    let text = read(config)?;
    let objective = match model {
        Some(path) => SurrogateObjective {
            space: SearchSpace::from_json(&text)?,
            model: SvrModel::load(path)?,
        },
        None => {
            let bench = Benchmark::from_json(&text)?;
            let cfg = experiment_config(&bench, seed);
            let data = simulated(&bench, &cfg).map_err(|e| e.in_stage("dataset"))?;
            let (model, _) = fit_surrogate(bench.space(), &data, &cfg).map_err(|e| e.in_stage("surrogate"))?;
            SurrogateObjective {
                space: bench.space().clone(),
                model,
            }
        }
    };
    if let Some(d) = objective.model.dim() {
        if d != objective.space.latent_dim() {
            return Err(simbo::Error::DimensionMismatch {
                expected: objective.space.latent_dim(),
                got: d,
            }
            .into());
        }
    }
    let cfg = OptimizationConfig {
        budget: iterations,
        seed,
        ..Default::default()
    };
    let trace = bo_run(&objective, &objective.space, &cfg).map_err(|e| e.in_stage("optimize"))?;
    let (point, quality) = recommend(&trace)?;
    out_dir(out)?;
    let mut bytes = Vec::new();
    trace.write_csv(&objective.space, &mut bytes)?;
    write(out.join("trace.csv"), &bytes)?;
    let names = objective.space.variables().iter().map(|v| v.name.clone());
    let recipe: serde_json::Map<String, serde_json::Value> = names.zip(point.0.iter().map(|v| json!(v))).collect();
    write(
        out.join("recommendation.json"),
        &pretty(&json!({ "seed": seed, "iterations": iterations, "point": recipe, "quality": quality }))?,
    )?;
    println!("best {quality:.4} at {point}");
    Ok(())
}

fn benchmark(bench: &Benchmark, seed: u64, iterations: usize, replications: usize, out: &Path) -> anyhow::Result<()> {
    let cfg = ExperimentConfig {
        iterations,
        replications,
        ..experiment_config(bench, seed)
    };
    let start = Instant::now();
    let done = AtomicUsize::new(0);
    let progress = |p: Progress| match p {
        Progress::Dataset { rows } => eprintln!("dataset: {rows} rows"),
        Progress::Surrogate { c, gamma, cv_rmse } => {
            eprintln!("surrogate: C = {c}, gamma = {gamma}, cv_rmse = {cv_rmse:.4}")
        }
        Progress::Replication {
            index,
            total,
            bo_final,
            rs_final,
        } => {
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            eprintln!("replication {n}/{total} (#{index}): bo {bo_final:.4}, random search {rs_final:.4}");
        }
    };
    let report = run_benchmark(bench, &cfg, &progress)?;
    export_report(&report, out)?;
    let secs = start.elapsed().as_secs_f64();
    write(out.join("timing.txt"), format!("wall_time_s {secs:.3}\n").as_bytes())?;
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    for c in &report.curves {
        println!("{:>14}  final mean quality {:.4}", c.method, c.final_mean());
    }
    println!(
        "sign test p = {:.3e}; recipe matches reference on {}/{} variables",
        report.sign_test.p_value,
        report.reference_hits(),
        report.reference.len()
    );
}

fn report(config: &Path, out: &Path) -> anyhow::Result<()> {
    let report: ExperimentReport = serde_json::from_str(&read(config)?)
        .map_err(simbo::Error::from)
        .map_err(|e| anyhow!(e).context(format!("parsing {}", config.display())))?;
    export_report(&report, out)?;
    print_summary(&report);
    Ok(())
}
