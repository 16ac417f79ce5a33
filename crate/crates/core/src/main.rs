use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fkgp::bench::{
    fit_method, run_experiment, sample_target, slice_domain, write_outputs, ExperimentConfig,
    Method,
};
use fkgp::hyperopt::{HyperOptions, DEFAULT_RESTARTS};
use fkgp::pde::validate_lipschitz;
use fkgp::problems::{named_problem, ProblemSpec, DEFAULT_DIM};
use fkgp::sde::{FkConfig, DEFAULT_TIME_STEPS};
use fkgp::uncertainty::{uncertainty_report, ReportOptions};
use fkgp::Error;

#[derive(Parser)]
#[command(
    name = "fkgp",
    version,
    about = "Feynman-Kac sampling + heteroscedastic GP regression for Kolmogorov PDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator and print the posterior on the slice.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Rows in the printed table.
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Run a full (M, N, seed) sweep and write results.
    Sweep(SweepArgs),
    /// Print the uncertainty report of an HSGPR fit.
    Bounds {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 200)]
        eigen_samples: usize,
    },
    /// Probe the coefficients of a built-in problem for Lipschitz regularity.
    Validate {
        #[arg(long, default_value = "heat")]
        problem: String,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "heat")]
    problem: String,
    #[arg(long, default_value = "hsgpr")]
    method: Method,
    #[arg(long = "M", default_value_t = 800)]
    m: usize,
    #[arg(long = "N", default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = DEFAULT_TIME_STEPS)]
    time_steps: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    #[arg(long = "M", value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Comma-separated seeds or a half-open range `a..b`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Config(format!("cannot parse seeds `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn sweep_config(args: &SweepArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::new(ProblemSpec::Named(
            args.problem.clone().unwrap_or_else(|| "heat".into()),
        )),
    };
    if let Some(p) = &args.problem {
        config.problem = ProblemSpec::Named(p.clone());
    }
    if let Some(m) = &args.method {
        config.methods = m.clone();
    }
    if let Some(m) = &args.m {
        config.m_list = m.clone();
    }
    if let Some(n) = &args.n {
        config.n_list = n.clone();
    }
    if let Some(s) = &args.seeds {
        config.seeds = parse_seeds(s)?;
    }
    if let Some(out) = &args.out {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn sweep(args: &SweepArgs) -> ExitCode {
    let config = match sweep_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let records = match run_experiment(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("results"));
    if let Err(e) = write_outputs(&dir, &config, &records) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let failed = records.iter().filter(|r| r.failed()).count();
    eprintln!(
        "{} records ({failed} failed) -> {}",
        records.len(),
        dir.display()
    );
    if failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn hyper_options(run: &RunArgs) -> HyperOptions {
    HyperOptions {
        restarts: run.restarts,
        seed: run.seed,
        ..Default::default()
    }
}

fn solve(run: &RunArgs, rows: usize) -> Result<(), Error> {
    let prepared = named_problem(&run.problem, run.dim)?;
    let domain = slice_domain(run.dim, run.n)?;
    let fk = FkConfig::new(run.m, run.seed).with_time_steps(run.time_steps);
    let ens = sample_target(&prepared, &domain, &fk)?;
    let fit = fit_method(run.method, &domain, &ens, &hyper_options(run))?;
    if let Some(h) = &fit.hyper {
        println!(
            "# length_scale={:.6e} amplitude={:.6e} noise={} log_likelihood={:.6}",
            h.spec.length_scale,
            h.spec.amplitude,
            h.noise_variance
                .map_or("per-point".into(), |v| format!("{v:.6e}")),
            h.log_likelihood
        );
    }
    println!(
        "{:>10} {:>14} {:>14} {:>14}",
        "x1", "mean", "std", "reference"
    );
    for s in domain.uniform_coordinates(rows.max(2)) {
        let mean = fit.estimator.mean_at(&domain, s)?;
        let std = fit.estimator.variance_at(&domain, s).map(f64::sqrt);
        let reference = prepared.reference(&domain.point_at(s));
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
        println!(
            "{s:>10.4} {mean:>14.6e} {:>14} {:>14}",
            fmt(std),
            fmt(reference)
        );
    }
    Ok(())
}

fn bounds(run: &RunArgs, eigen_samples: usize) -> Result<(), Error> {
    if !run.method.is_gp() {
        return Err(Error::Config("bounds needs a GP method".into()));
    }
    let prepared = named_problem(&run.problem, run.dim)?;
    let domain = slice_domain(run.dim, run.n)?;
    let fk = FkConfig::new(run.m, run.seed).with_time_steps(run.time_steps);
    let ens = sample_target(&prepared, &domain, &fk)?;
    let fit = fit_method(run.method, &domain, &ens, &hyper_options(run))?;
    let post = fit.estimator.posterior().expect("GP method");
    let options = ReportOptions {
        eigen_samples,
        seed: run.seed,
        ..Default::default()
    };
    let report = uncertainty_report(post, &ens, &domain, &options)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn validate(problem: &str, dim: usize, probes: usize, seed: u64) -> Result<(), Error> {
    let prepared = named_problem(problem, dim)?;
    let report = validate_lipschitz(&prepared.user_problem, probes, seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn exit_code(result: Result<(), Error>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::UnknownProblem(_) | Error::InvalidArgument(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve { run, points } => exit_code(solve(&run, points)),
        Command::Sweep(args) => sweep(&args),
        Command::Bounds { run, eigen_samples } => exit_code(bounds(&run, eigen_samples)),
        Command::Validate {
            problem,
            dim,
            probes,
            seed,
        } => exit_code(validate(&problem, dim, probes, seed)),
    }
}
