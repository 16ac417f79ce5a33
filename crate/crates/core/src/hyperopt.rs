//! Multi-restart gradient ascent on the log marginal likelihood.
//!
//! Hyperparameters live in log space and are squashed into wide boxes by a
//! logistic map, so the ascent itself is unconstrained. Each restart uses
//! backtracking (Armijo) line search along the gradient.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::{fit_posterior, log_marginal_likelihood, GpPosterior, NoiseModel};
use crate::kernel::{distance, KernelSpec};
use crate::rng::{self, Purpose};

pub const DEFAULT_RESTARTS: usize = 27;
pub const DEFAULT_SMOOTHNESS: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Matérn order; fixed, not optimized.
    pub smoothness: f64,
    /// Keep `σ_f² = 1` instead of fitting it.
    pub pin_amplitude: bool,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for HyperOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            smoothness: DEFAULT_SMOOTHNESS,
            pin_amplitude: false,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
        }
    }
}

/// Which noise the likelihood sees while fitting.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseFit {
    /// Noise pinned to the given model; fits `h` and `σ_f²`.
    Fixed(NoiseModel),
    /// Constant noise `σ²` fitted alongside `h` and `σ_f²`.
    Homoscedastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedHyperparameters {
    pub spec: KernelSpec,
    /// Fitted `σ²` for homoscedastic noise.
    pub noise_variance: Option<f64>,
    pub log_likelihood: f64,
    pub restart: usize,
    pub iterations: usize,
    pub converged: bool,
    pub failed_restarts: usize,
}

impl FittedHyperparameters {
    pub fn noise_model(&self, fit: &NoiseFit) -> NoiseModel {
        match fit {
            NoiseFit::Fixed(model) => model.clone(),
            NoiseFit::Homoscedastic => NoiseModel::Homoscedastic {
                variance: self.noise_variance.unwrap_or(0.0),
            },
        }
    }
}

/// One restart's ascent.
#[derive(Clone, Debug)]
pub struct AscentTrace {
    pub log_hyper: Vec<f64>,
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Box for one log hyperparameter.
#[derive(Clone, Copy, Debug)]
struct Bounds {
    lo: f64,
    hi: f64,
}

impl Bounds {
    fn to_log(self, phi: f64) -> f64 {
        self.lo + (self.hi - self.lo) * logistic(phi)
    }

    fn from_log(self, theta: f64) -> f64 {
        let p = ((theta - self.lo) / (self.hi - self.lo)).clamp(1e-12, 1.0 - 1e-12);
        (p / (1.0 - p)).ln()
    }

    fn dlog_dphi(self, phi: f64) -> f64 {
        let s = logistic(phi);
        (self.hi - self.lo) * s * (1.0 - s)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Problem<'a> {
    points: &'a [Vec<f64>],
    data: &'a [f64],
    noise: &'a NoiseFit,
    options: &'a HyperOptions,
    /// Boxes for `[log h, log σ_f², log σ²]` (the last only when fitted).
    bounds: Vec<Bounds>,
    /// Initial sampling ranges, same layout.
    init: Vec<Bounds>,
    /// Indices into `[log h, log σ_f², log σ²]` that are free.
    free: Vec<usize>,
}

impl Problem<'_> {
    fn new<'a>(
        points: &'a [Vec<f64>],
        data: &'a [f64],
        noise: &'a NoiseFit,
        options: &'a HyperOptions,
    ) -> Problem<'a> {
        let mut diameter = 0.0_f64;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                diameter = diameter.max(distance(&points[i], &points[j]));
            }
        }
        if diameter == 0.0 {
            diameter = 1.0;
        }
        let mut scale2 = data.iter().map(|v| v * v).sum::<f64>() / data.len().max(1) as f64;
        if !(scale2 > 0.0) {
            scale2 = 1.0;
        }
        let ld = diameter.ln();
        let ls = scale2.ln();
        let ln10 = std::f64::consts::LN_10;
        let bounds = vec![
            Bounds {
                lo: ld - 3.0 * ln10,
                hi: ld + 2.0 * ln10,
            },
            Bounds {
                lo: ls - 6.0 * ln10,
                hi: ls + 6.0 * ln10,
            },
            Bounds {
                lo: ls - 12.0 * ln10,
                hi: ls + 4.0 * ln10,
            },
        ];
        let init = vec![
            Bounds {
                lo: ld + 0.01_f64.ln(),
                hi: ld + 10.0_f64.ln(),
            },
            Bounds {
                lo: ls - 3.0 * ln10,
                hi: ls + 3.0 * ln10,
            },
            Bounds {
                lo: ls - 3.0 * ln10,
                hi: ls + 3.0 * ln10,
            },
        ];
        let mut free = vec![0];
        if !options.pin_amplitude {
            free.push(1);
        }
        if matches!(noise, NoiseFit::Homoscedastic) {
            free.push(2);
        }
        Problem {
            points,
            data,
            noise,
            options,
            bounds,
            init,
            free,
        }
    }

    /// Full `[log h, log σ_f², log σ²]` from the free logistic coordinates.
    fn log_hyper(&self, phi: &[f64]) -> [f64; 3] {
        let mut theta = [0.0, 0.0, f64::NEG_INFINITY];
        for (k, &idx) in self.free.iter().enumerate() {
            theta[idx] = self.bounds[idx].to_log(phi[k]);
        }
        theta
    }

    fn spec_and_noise(&self, theta: &[f64; 3]) -> Result<(KernelSpec, NoiseModel)> {
        let spec = KernelSpec::new(self.options.smoothness, theta[0].exp(), theta[1].exp())?;
        let noise = match self.noise {
            NoiseFit::Fixed(model) => model.clone(),
            NoiseFit::Homoscedastic => NoiseModel::homoscedastic(theta[2].exp())?,
        };
        Ok((spec, noise))
    }

    /// Likelihood and gradient in the free logistic coordinates.
    fn evaluate(&self, phi: &[f64]) -> Result<(f64, Vec<f64>)> {
        let theta = self.log_hyper(phi);
        let (spec, noise) = self.spec_and_noise(&theta)?;
        let lik = log_marginal_likelihood(&spec, self.points, self.data, &noise)?;
        if !lik.value.is_finite() {
            return Err(Error::Optimization { restarts: 0 });
        }
        let grad = self
            .free
            .iter()
            .enumerate()
            .map(|(k, &idx)| lik.gradient[idx] * self.bounds[idx].dlog_dphi(phi[k]))
            .collect();
        Ok((lik.value, grad))
    }

    fn initial_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = [0.0; 3];
        for (idx, b) in self.init.iter().enumerate() {
            theta[idx] = rng.random_range(b.lo..b.hi);
        }
        self.free
            .iter()
            .map(|&idx| self.bounds[idx].from_log(theta[idx]))
            .collect()
    }

    fn ascend(&self, mut phi: Vec<f64>) -> Result<AscentTrace> {
        const ARMIJO: f64 = 1e-4;
        let (mut value, mut grad) = self.evaluate(&phi)?;
        let mut history = vec![value];
        let mut step: f64 = 1.0;
        let mut converged = false;
        for _ in 0..self.options.max_iterations {
            let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if gmax < self.options.gradient_tolerance {
                converged = true;
                break;
            }
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            // Move each coordinate by at most 2 on the first try.
            step = (2.0 * step).min(2.0 / gmax);
            let mut accepted = None;
            while step * gmax > 1e-12 {
                let trial: Vec<f64> = phi.iter().zip(&grad).map(|(p, g)| p + step * g).collect();
                if let Ok((v, g)) = self.evaluate(&trial) {
                    if v >= value + ARMIJO * step * g2 {
                        accepted = Some((trial, v, g));
                        break;
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some((p, v, g)) => {
                    phi = p;
                    value = v;
                    grad = g;
                    history.push(v);
                }
                None => {
                    // No ascent possible at machine precision.
                    converged = true;
                    break;
                }
            }
        }
        let theta = self.log_hyper(&phi);
        Ok(AscentTrace {
            log_hyper: theta.to_vec(),
            history,
            converged,
        })
    }
}

/// Runs a single ascent from the initial point drawn for `restart`.
pub fn ascend_once(
    points: &[Vec<f64>],
    data: &[f64],
    noise: &NoiseFit,
    options: &HyperOptions,
    restart: usize,
) -> Result<AscentTrace> {
    if data
        .iter()
        .chain(points.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidArgument("non-finite training data".into()));
    }
    let problem = Problem::new(points, data, noise, options);
    let mut rng = rng::stream(options.seed, Purpose::Restart, restart as u64, 0);
    let start = problem.initial_point(&mut rng);
    problem.ascend(start)
}

/// Multi-restart maximization of the marginal likelihood; returns the best
/// restart, lowest index on ties.
pub fn optimize_hyperparameters(
    points: &[Vec<f64>],
    data: &[f64],
    noise: &NoiseFit,
    options: &HyperOptions,
) -> Result<FittedHyperparameters> {
    if options.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    if points.len() != data.len() || points.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} points for {} observations",
            points.len(),
            data.len()
        )));
    }
    if data
        .iter()
        .chain(points.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidArgument("non-finite training data".into()));
    }
    let problem = Problem::new(points, data, noise, options);
    let runs: Vec<Result<AscentTrace>> = (0..options.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(options.seed, Purpose::Restart, k as u64, 0);
            problem.ascend(problem.initial_point(&mut rng))
        })
        .collect();

    let failed_restarts = runs.iter().filter(|r| r.is_err()).count();
    let mut best: Option<(usize, AscentTrace)> = None;
    for (k, run) in runs.into_iter().enumerate() {
        let Ok(trace) = run else { continue };
        let better = match &best {
            None => true,
            Some((_, b)) => trace.history.last() > b.history.last(),
        };
        if better {
            best = Some((k, trace));
        }
    }
    let (restart, trace) = best.ok_or(Error::Optimization {
        restarts: options.restarts,
    })?;
    let theta = &trace.log_hyper;
    let spec = KernelSpec::new(options.smoothness, theta[0].exp(), theta[1].exp())?;
    let spec = if options.pin_amplitude {
        spec.with_amplitude(1.0)
    } else {
        spec
    };
    Ok(FittedHyperparameters {
        spec,
        noise_variance: matches!(noise, NoiseFit::Homoscedastic).then(|| theta[2].exp()),
        log_likelihood: *trace.history.last().expect("history is never empty"),
        restart,
        iterations: trace.history.len() - 1,
        converged: trace.converged,
        failed_restarts,
    })
}

/// Fits hyperparameters, then the posterior under them.
pub fn fit_gp(
    points: &[Vec<f64>],
    data: &[f64],
    noise: NoiseFit,
    options: &HyperOptions,
) -> Result<(GpPosterior, FittedHyperparameters)> {
    let fitted = optimize_hyperparameters(points, data, &noise, options)?;
    let post = fit_posterior(fitted.spec, points, data, fitted.noise_model(&noise))?;
    Ok((post, fitted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_data(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        let y = pts.iter().map(|p| (5.0 * p[0]).sin()).collect();
        (pts, y)
    }

    #[test]
    fn rejects_non_finite_data() {
        let (pts, mut y) = sine_data(5);
        y[2] = f64::INFINITY;
        let opts = HyperOptions::default();
        assert!(optimize_hyperparameters(&pts, &y, &NoiseFit::Homoscedastic, &opts).is_err());
        assert!(ascend_once(&pts, &y, &NoiseFit::Homoscedastic, &opts, 0).is_err());
    }

    #[test]
    fn history_is_nondecreasing() {
        let (pts, y) = sine_data(12);
        let opts = HyperOptions {
            seed: 3,
            ..Default::default()
        };
        for restart in 0..5 {
            let trace = ascend_once(&pts, &y, &NoiseFit::Homoscedastic, &opts, restart).unwrap();
            assert!(trace.history.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn more_restarts_never_hurt() {
        let (pts, y) = sine_data(10);
        let one = HyperOptions {
            restarts: 1,
            seed: 5,
            ..Default::default()
        };
        let many = HyperOptions {
            restarts: 27,
            ..one
        };
        let a = optimize_hyperparameters(&pts, &y, &NoiseFit::Homoscedastic, &one).unwrap();
        let b = optimize_hyperparameters(&pts, &y, &NoiseFit::Homoscedastic, &many).unwrap();
        assert!(b.log_likelihood >= a.log_likelihood);
    }

    #[test]
    fn deterministic_given_seed() {
        let (pts, y) = sine_data(8);
        let opts = HyperOptions {
            restarts: 6,
            seed: 11,
            ..Default::default()
        };
        let a = optimize_hyperparameters(&pts, &y, &NoiseFit::Homoscedastic, &opts).unwrap();
        let b = optimize_hyperparameters(&pts, &y, &NoiseFit::Homoscedastic, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pinned_amplitude_stays_one() {
        let (pts, y) = sine_data(8);
        let opts = HyperOptions {
            restarts: 3,
            pin_amplitude: true,
            ..Default::default()
        };
        let noise = NoiseFit::Fixed(NoiseModel::homoscedastic(1e-3).unwrap());
        let fit = optimize_hyperparameters(&pts, &y, &noise, &opts).unwrap();
        assert_eq!(fit.spec.amplitude, 1.0);
        assert!(fit.noise_variance.is_none());
    }

    #[test]
    fn zero_restarts_rejected() {
        let (pts, y) = sine_data(4);
        let opts = HyperOptions {
            restarts: 0,
            ..Default::default()
        };
        assert!(optimize_hyperparameters(&pts, &y, &NoiseFit::Homoscedastic, &opts).is_err());
    }

    #[test]
    fn constant_data_gives_finite_likelihood() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
        let y = vec![2.0; 10];
        let opts = HyperOptions {
            restarts: 5,
            ..Default::default()
        };
        let fit = optimize_hyperparameters(&pts, &y, &NoiseFit::Homoscedastic, &opts).unwrap();
        assert!(fit.log_likelihood.is_finite());
        assert!(fit.noise_variance.unwrap() < 1e-2 * 4.0);
        assert!(fit.spec.amplitude > 0.1);
    }
}
