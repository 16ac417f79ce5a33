//! Config-driven experiment runner: sweeps `(M, N, seed)`, fits each
//! estimator, scores it against a reference and writes result tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{l2_error, linear_interpolate};
use crate::error::{Error, Result};
use crate::gpr::{GpPosterior, NoiseModel};
use crate::hyperopt::{
    fit_gp, FittedHyperparameters, HyperOptions, NoiseFit, DEFAULT_RESTARTS, DEFAULT_SMOOTHNESS,
};
use crate::pde::QueryDomain;
use crate::problems::{PreparedProblem, ProblemSpec, DEFAULT_DIM};
use crate::sde::{fk_ensemble, FkConfig, FkEnsemble, DEFAULT_TIME_STEPS};
use crate::uncertainty::{
    estimate_eigenvalues, imse, imse_lower_bound, r_min_estimate, DEFAULT_EIGEN_SAMPLES,
    DEFAULT_IMSE_QUAD_POINTS,
};

pub const DEFAULT_L2_QUAD_POINTS: usize = 1001;
/// Seed of the large-sample FK reference run.
pub const REFERENCE_SEED: u64 = 0x5eed_0f_4e_f000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hsgpr,
    Gpr,
    Linear,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Hsgpr, Method::Gpr, Method::Linear];

    pub fn is_gp(self) -> bool {
        !matches!(self, Method::Linear)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Hsgpr => "hsgpr",
            Method::Gpr => "gpr",
            Method::Linear => "linear",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hsgpr" => Ok(Method::Hsgpr),
            "gpr" => Ok(Method::Gpr),
            "linear" => Ok(Method::Linear),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Analytic,
    /// Large-sample FK means on `n_ref` nodes, linearly interpolated.
    FkLarge {
        m_ref: usize,
        n_ref: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkOverrides {
    pub time_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelOverrides {
    pub smoothness: Option<f64>,
    #[serde(default)]
    pub pin_amplitude: bool,
}

fn default_dim() -> usize {
    DEFAULT_DIM
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_m_list() -> Vec<usize> {
    vec![800]
}
fn default_n_list() -> Vec<usize> {
    vec![20]
}
fn default_seeds() -> Vec<u64> {
    (0..50).collect()
}
fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}
fn default_reference() -> Reference {
    Reference::Analytic
}
fn default_quad_points() -> usize {
    DEFAULT_L2_QUAD_POINTS
}
fn default_imse_quad_points() -> usize {
    DEFAULT_IMSE_QUAD_POINTS
}
fn default_eigen_samples() -> usize {
    DEFAULT_EIGEN_SAMPLES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_m_list", alias = "M_list")]
    pub m_list: Vec<usize>,
    #[serde(default = "default_n_list", alias = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub fk: FkOverrides,
    #[serde(default)]
    pub kernel: KernelOverrides,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_reference")]
    pub reference: Reference,
    /// Nodes for the L² error.
    #[serde(default = "default_quad_points")]
    pub quad_points: usize,
    #[serde(default = "default_imse_quad_points")]
    pub imse_quad_points: usize,
    #[serde(default = "default_eigen_samples")]
    pub eigen_samples: usize,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec) -> Self {
        serde_json::from_value(serde_json::json!({ "problem": problem }))
            .expect("defaults are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.methods.is_empty()
            || self.m_list.is_empty()
            || self.n_list.is_empty()
            || self.seeds.is_empty()
        {
            return fail("methods, M_list, N_list and seeds must be nonempty");
        }
        if self.m_list.iter().any(|m| *m < 2) {
            return fail("every M must be at least 2");
        }
        if self.n_list.iter().any(|n| *n < 2) {
            return fail("every N must be at least 2");
        }
        if self.restarts == 0 {
            return fail("restarts must be at least 1");
        }
        if self.quad_points < 2 || self.imse_quad_points < 2 || self.eigen_samples < 2 {
            return fail("quadrature and eigen sample counts must be at least 2");
        }
        if self.fk.time_steps == Some(0) {
            return fail("fk.time_steps must be at least 1");
        }
        if let Some(a) = self.kernel.smoothness {
            if !(a > 0.0) {
                return fail("kernel.smoothness must be positive");
            }
        }
        match self.reference {
            Reference::FkLarge { m_ref, n_ref } if m_ref < 2 || n_ref < 2 => {
                return fail("fk_large needs m_ref ≥ 2 and n_ref ≥ 2");
            }
            _ => {}
        }
        let prepared = self
            .problem
            .prepare(self.dim)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.reference == Reference::Analytic && !prepared.has_reference() {
            return fail("no analytic reference for this problem; use fk_large");
        }
        Ok(())
    }

    /// Hex SHA-256 of the config serialized without its output path.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.hashed()).expect("config serializes");
        Sha256::digest(bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn hashed(&self) -> ExperimentConfig {
        ExperimentConfig {
            output: None,
            ..self.clone()
        }
    }

    fn fk_config(&self, m: usize, seed: u64) -> FkConfig {
        FkConfig::new(m, seed).with_time_steps(self.fk.time_steps.unwrap_or(DEFAULT_TIME_STEPS))
    }

    fn hyper_options(&self, seed: u64) -> HyperOptions {
        HyperOptions {
            restarts: self.restarts,
            seed,
            smoothness: self.kernel.smoothness.unwrap_or(DEFAULT_SMOOTHNESS),
            pin_amplitude: self.kernel.pin_amplitude,
            ..Default::default()
        }
    }
}

/// The slice used throughout: axis 0 over `[0, 1]`, other coordinates 0.5.
pub fn slice_domain(dim: usize, n: usize) -> Result<QueryDomain> {
    QueryDomain::new(0, 0.0, 1.0, vec![0.5; dim], n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperRecord {
    pub smoothness: f64,
    pub length_scale: f64,
    pub amplitude: f64,
    pub noise_variance: Option<f64>,
    pub log_likelihood: f64,
    pub restart: usize,
    pub converged: bool,
    pub failed_restarts: usize,
}

impl From<&FittedHyperparameters> for HyperRecord {
    fn from(f: &FittedHyperparameters) -> Self {
        Self {
            smoothness: f.spec.smoothness,
            length_scale: f.spec.length_scale,
            amplitude: f.spec.amplitude,
            noise_variance: f.noise_variance,
            log_likelihood: f.log_likelihood,
            restart: f.restart,
            converged: f.converged,
            failed_restarts: f.failed_restarts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub problem: String,
    pub method: Method,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub l2_error: Option<f64>,
    pub imse: Option<f64>,
    pub l_imse: Option<f64>,
    pub r_min_estimate: Option<f64>,
    pub hyperparameters: Option<HyperRecord>,
    pub jitter: Option<f64>,
    pub cole_hopf_lambda: Option<f64>,
    pub error: Option<String>,
    /// Kept out of the JSON-lines output so reruns are byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl ResultRecord {
    fn empty(
        problem: &str,
        method: Method,
        m: usize,
        n: usize,
        seed: u64,
        lambda: Option<f64>,
    ) -> Self {
        Self {
            problem: problem.into(),
            method,
            m,
            n,
            seed,
            l2_error: None,
            imse: None,
            l_imse: None,
            r_min_estimate: None,
            hyperparameters: None,
            jitter: None,
            cole_hopf_lambda: lambda,
            error: None,
            wall_seconds: 0.0,
        }
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// A fitted estimator on the slice.
#[derive(Clone, Debug)]
pub enum Estimator {
    Gp(Box<GpPosterior>),
    Linear {
        domain: QueryDomain,
        values: Vec<f64>,
    },
}

impl Estimator {
    pub fn mean_at(&self, domain: &QueryDomain, s: f64) -> Result<f64> {
        match self {
            Estimator::Gp(post) => Ok(post.mean(&domain.point_at(s))),
            Estimator::Linear { domain, values } => linear_interpolate(domain, values, s),
        }
    }

    pub fn variance_at(&self, domain: &QueryDomain, s: f64) -> Option<f64> {
        match self {
            Estimator::Gp(post) => Some(post.variance(&domain.point_at(s))),
            Estimator::Linear { .. } => None,
        }
    }

    pub fn posterior(&self) -> Option<&GpPosterior> {
        match self {
            Estimator::Gp(post) => Some(post),
            Estimator::Linear { .. } => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fit {
    pub estimator: Estimator,
    pub hyper: Option<FittedHyperparameters>,
}

/// FK ensemble on the slice grid, mapped back through Cole-Hopf if the
/// problem was linearized.
pub fn sample_target(
    prepared: &PreparedProblem,
    domain: &QueryDomain,
    fk: &FkConfig,
) -> Result<FkEnsemble> {
    let ens = fk_ensemble(&prepared.sampling, domain, fk)?;
    match prepared.cole_hopf_lambda {
        Some(lambda) => ens.cole_hopf_inverse(lambda),
        None => Ok(ens),
    }
}

pub fn fit_method(
    method: Method,
    domain: &QueryDomain,
    ensemble: &FkEnsemble,
    options: &HyperOptions,
) -> Result<Fit> {
    let noise = match method {
        Method::Linear => {
            return Ok(Fit {
                estimator: Estimator::Linear {
                    domain: domain.clone(),
                    values: ensemble.mean.clone(),
                },
                hyper: None,
            })
        }
        Method::Hsgpr => NoiseFit::Fixed(NoiseModel::heteroscedastic(
            ensemble.variance.clone(),
            ensemble.sample_size,
        )?),
        Method::Gpr => NoiseFit::Homoscedastic,
    };
    let (post, hyper) = fit_gp(&ensemble.points, &ensemble.mean, noise, options)?;
    Ok(Fit {
        estimator: Estimator::Gp(Box::new(post)),
        hyper: Some(hyper),
    })
}

/// Reference solution as a function of the slice coordinate.
pub enum ReferenceFn {
    Analytic(PreparedProblem, QueryDomain),
    Table {
        domain: QueryDomain,
        values: Vec<f64>,
    },
}

impl ReferenceFn {
    pub fn build(config: &ExperimentConfig, prepared: &PreparedProblem) -> Result<Self> {
        match config.reference {
            Reference::Analytic => Ok(ReferenceFn::Analytic(
                prepared.clone(),
                slice_domain(prepared.dim(), 2)?,
            )),
            Reference::FkLarge { m_ref, n_ref } => {
                let domain = slice_domain(prepared.dim(), n_ref)?;
                let fk = config.fk_config(m_ref, REFERENCE_SEED);
                let ens = sample_target(prepared, &domain, &fk)?;
                Ok(ReferenceFn::Table {
                    domain,
                    values: ens.mean,
                })
            }
        }
    }

    pub fn at(&self, s: f64) -> Result<f64> {
        match self {
            ReferenceFn::Analytic(p, domain) => p
                .reference(&domain.point_at(s))
                .ok_or_else(|| Error::Config(format!("no analytic reference for `{}`", p.name))),
            ReferenceFn::Table { domain, values } => linear_interpolate(domain, values, s),
        }
    }
}

fn score(
    config: &ExperimentConfig,
    method: Method,
    domain: &QueryDomain,
    ensemble: &FkEnsemble,
    reference: &ReferenceFn,
    seed: u64,
    record: &mut ResultRecord,
) -> Result<()> {
    let fit = fit_method(method, domain, ensemble, &config.hyper_options(seed))?;
    record.l2_error = Some(l2_error(
        |s| fit.estimator.mean_at(domain, s),
        |s| reference.at(s),
        domain,
        config.quad_points,
    )?);
    if let Some(post) = fit.estimator.posterior() {
        record.imse = Some(imse(post, domain, config.imse_quad_points)?);
        record.jitter = Some(post.jitter_used());
        let r_min = r_min_estimate(ensemble).floored;
        record.r_min_estimate = Some(r_min);
        if r_min > 0.0 {
            let eigen = estimate_eigenvalues(post.spec(), domain, config.eigen_samples, seed)?;
            record.l_imse = Some(imse_lower_bound(
                &eigen,
                r_min,
                ensemble.len(),
                ensemble.sample_size,
            )?);
        }
    }
    record.hyperparameters = fit.hyper.as_ref().map(HyperRecord::from);
    Ok(())
}

fn run_tuple(
    config: &ExperimentConfig,
    prepared: &PreparedProblem,
    reference: &ReferenceFn,
    (m, n, seed): (usize, usize, u64),
) -> Vec<ResultRecord> {
    let label = config.problem.label();
    let start = Instant::now();
    let sampled = slice_domain(prepared.dim(), n).and_then(|domain| {
        Ok((
            sample_target(prepared, &domain, &config.fk_config(m, seed))?,
            domain,
        ))
    });
    let sample_seconds = start.elapsed().as_secs_f64();
    config
        .methods
        .iter()
        .map(|&method| {
            let mut record =
                ResultRecord::empty(&label, method, m, n, seed, prepared.cole_hopf_lambda);
            let start = Instant::now();
            let outcome = match &sampled {
                Ok((ens, domain)) => {
                    score(config, method, domain, ens, reference, seed, &mut record)
                        .map_err(|e| e.to_string())
                }
                Err(e) => Err(e.to_string()),
            };
            if let Err(e) = outcome {
                log::warn!("{label} {} M={m} N={n} seed={seed}: {e}", method.name());
                record.l2_error = None;
                record.error = Some(e);
            }
            record.wall_seconds = sample_seconds + start.elapsed().as_secs_f64();
            record
        })
        .collect()
}

/// Runs every `(M, N, seed)` tuple and every method. Configuration problems
/// are errors; failures inside a tuple are recorded and the sweep continues.
/// Records come back sorted by `(method, M, N, seed)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let prepared = config.problem.prepare(config.dim)?;
    let reference = ReferenceFn::build(config, &prepared)?;
    let tuples: Vec<(usize, usize, u64)> = config
        .m_list
        .iter()
        .flat_map(|&m| {
            config
                .n_list
                .iter()
                .flat_map(move |&n| config.seeds.iter().map(move |&s| (m, n, s)))
        })
        .collect();
    let mut records: Vec<ResultRecord> = tuples
        .par_iter()
        .flat_map_iter(|&t| run_tuple(config, &prepared, &reference, t))
        .collect();
    records.sort_by(|a, b| (a.method, a.m, a.n, a.seed).cmp(&(b.method, b.m, b.n, b.seed)));
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and `sample std / √n`; a single value has standard error 0.
pub fn mean_stderr(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Some(Stat { mean, stderr })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub problem: String,
    pub method: Method,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seeds: usize,
    pub failed: usize,
    pub l2_error: Option<Stat>,
    pub imse: Option<Stat>,
    pub l_imse: Option<Stat>,
    /// Only one successful seed, so the standard errors are 0 by convention.
    pub single_seed: bool,
}

pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, Method, usize, usize), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.problem.clone(), r.method, r.m, r.n))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((problem, method, m, n), rs)| {
            let ok: Vec<&&ResultRecord> = rs.iter().filter(|r| !r.failed()).collect();
            let collect = |f: fn(&ResultRecord) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|r| f(r)).collect()
            };
            SummaryRow {
                problem,
                method,
                m,
                n,
                seeds: rs.len(),
                failed: rs.len() - ok.len(),
                l2_error: mean_stderr(&collect(|r| r.l2_error)),
                imse: mean_stderr(&collect(|r| r.imse)),
                l_imse: mean_stderr(&collect(|r| r.l_imse)),
                single_seed: ok.len() == 1,
            }
        })
        .collect()
}

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

#[derive(Serialize)]
struct Header<'a> {
    config_hash: String,
    config: &'a ExperimentConfig,
}

pub fn write_jsonl(
    out: &mut impl Write,
    config: &ExperimentConfig,
    records: &[ResultRecord],
) -> Result<()> {
    let header = Header {
        config_hash: config.hash(),
        config: &config.hashed(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_summary_csv(
    out: &mut impl Write,
    config: &ExperimentConfig,
    rows: &[SummaryRow],
) -> Result<()> {
    writeln!(out, "# config_hash={}", config.hash())?;
    writeln!(
        out,
        "problem,method,M,N,seeds,failed,l2_mean,l2_stderr,imse_mean,imse_stderr,l_imse_mean,l_imse_stderr,single_seed"
    )?;
    for r in rows {
        let stat = |s: &Option<Stat>| {
            (
                opt(s.as_ref().map(|s| s.mean)),
                opt(s.as_ref().map(|s| s.stderr)),
            )
        };
        let (l2m, l2s) = stat(&r.l2_error);
        let (im, is) = stat(&r.imse);
        let (lm, ls) = stat(&r.l_imse);
        writeln!(
            out,
            "{},{},{},{},{},{},{l2m},{l2s},{im},{is},{lm},{ls},{}",
            r.problem,
            r.method.name(),
            r.m,
            r.n,
            r.seeds,
            r.failed,
            r.single_seed
        )?;
    }
    Ok(())
}

pub fn write_timings_csv(out: &mut impl Write, records: &[ResultRecord]) -> Result<()> {
    writeln!(out, "problem,method,M,N,seed,wall_seconds")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{:.6}",
            r.problem,
            r.method.name(),
            r.m,
            r.n,
            r.seed,
            r.wall_seconds
        )?;
    }
    Ok(())
}

/// Writes results, summary and timings into `dir`.
pub fn write_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    records: &[ResultRecord],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, config, records)?;
    fs::write(dir.join(RESULTS_FILE), &buf)?;
    buf.clear();
    write_summary_csv(&mut buf, config, &summarize(records))?;
    fs::write(dir.join(SUMMARY_FILE), &buf)?;
    buf.clear();
    write_timings_csv(&mut buf, records)?;
    fs::write(dir.join(TIMINGS_FILE), &buf)?;
    Ok(())
}
