//! Euler-Maruyama paths and Feynman-Kac sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{cole_hopf_inverse, Diffusion, Orientation, PdeProblem, QueryDomain};
use crate::rng::{self, Purpose};

pub const DEFAULT_TIME_STEPS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FkConfig {
    /// Euler-Maruyama steps over `[t, T]`.
    pub time_steps: usize,
    /// FK samples per observation point.
    pub sample_size: usize,
    pub seed: u64,
}

impl FkConfig {
    pub fn new(sample_size: usize, seed: u64) -> Self {
        Self {
            time_steps: DEFAULT_TIME_STEPS,
            sample_size,
            seed,
        }
    }

    pub fn with_time_steps(mut self, time_steps: usize) -> Self {
        self.time_steps = time_steps;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.time_steps == 0 {
            return Err(Error::InvalidArgument(
                "time_steps must be at least 1".into(),
            ));
        }
        if self.sample_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "sample_size must be at least 2, got {}",
                self.sample_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Drives one Euler-Maruyama path, calling `visit(k, t_k, X_k)` on every
/// node `k = 0..=K`.
fn simulate<R, F>(
    problem: &PdeProblem,
    x0: &[f64],
    t0: f64,
    steps: usize,
    rng: &mut R,
    mut visit: F,
) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    let d = problem.dim();
    let m = problem.noise_dim();
    if x0.len() != d {
        return Err(Error::InvalidArgument(format!(
            "start point has dimension {}, expected {d}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("start point is not finite".into()));
    }
    let horizon = problem.horizon();
    if !(0.0..horizon).contains(&t0) {
        return Err(Error::InvalidArgument(format!(
            "start time {t0} outside [0, {horizon})"
        )));
    }
    let dt = (horizon - t0) / steps as f64;
    let sqrt_dt = dt.sqrt();

    let mut x = x0.to_vec();
    let mut drift = vec![0.0; d];
    let mut dw = vec![0.0; m];
    let mut diff = match problem.diffusion() {
        Diffusion::Isotropic(_) => Vec::new(),
        _ => vec![0.0; d * m],
    };

    visit(0, t0, &x)?;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        problem.drift_at(t, &x, &mut drift);
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = sqrt_dt * z;
        }
        match problem.diffusion() {
            Diffusion::Isotropic(s) => {
                for i in 0..d {
                    x[i] += drift[i] * dt + s * dw[i];
                }
            }
            _ => {
                problem.diffusion_at(t, &x, &mut diff);
                for i in 0..d {
                    let noise: f64 = diff[i * m..(i + 1) * m]
                        .iter()
                        .zip(&dw)
                        .map(|(a, w)| a * w)
                        .sum();
                    x[i] += drift[i] * dt + noise;
                }
            }
        }
        let t_next = t0 + (k + 1) as f64 * dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::PathBlowup {
                step: k + 1,
                t: t_next,
            });
        }
        visit(k + 1, t_next, &x)?;
    }
    Ok(())
}

/// One Euler-Maruyama discretization of `dX = b dt + a dW`, `X(t0) = x0`,
/// with `K` uniform steps up to the horizon.
pub fn euler_maruyama_path<R: Rng + ?Sized>(
    problem: &PdeProblem,
    x0: &[f64],
    t0: f64,
    time_steps: usize,
    rng: &mut R,
) -> Result<Path> {
    let mut path = Path {
        times: Vec::with_capacity(time_steps + 1),
        states: Vec::with_capacity(time_steps + 1),
    };
    simulate(problem, x0, t0, time_steps, rng, |_, t, x| {
        path.times.push(t);
        path.states.push(x.to_vec());
        Ok(())
    })?;
    Ok(path)
}

fn finite(coefficient: &'static str, value: f64, t: f64, x: &[f64]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteCoefficient {
            coefficient,
            t,
            x: x.to_vec(),
        })
    }
}

/// One FK sample `û(t0, x0)`. The discount exponent and the source integral
/// are trapezoidal sums over the path nodes.
pub fn fk_sample<R: Rng + ?Sized>(
    problem: &PdeProblem,
    x0: &[f64],
    t0: f64,
    time_steps: usize,
    rng: &mut R,
) -> Result<f64> {
    if problem.orientation() != Orientation::TerminalValue {
        return Err(Error::InvalidArgument(
            "FK sampling needs a terminal-value problem; reverse time first".into(),
        ));
    }
    if time_steps == 0 {
        return Err(Error::InvalidArgument(
            "time_steps must be at least 1".into(),
        ));
    }
    let dt = (problem.horizon() - t0) / time_steps as f64;
    let has_reaction = !problem.reaction().is_zero();
    let has_source = !problem.source().is_zero();

    let mut exponent = 0.0;
    let mut integral = 0.0;
    let mut prev_c = 0.0;
    let mut prev_term = 0.0;
    let mut value = 0.0;

    simulate(problem, x0, t0, time_steps, rng, |k, t, x| {
        let c = if has_reaction {
            finite("c", problem.reaction_at(t, x), t, x)?
        } else {
            0.0
        };
        if k > 0 {
            exponent += 0.5 * dt * (prev_c + c);
        }
        let discount = (-exponent).exp();
        if has_source {
            let term = finite("h", problem.source_at(t, x), t, x)? * discount;
            if k > 0 {
                integral += 0.5 * dt * (prev_term + term);
            }
            prev_term = term;
        }
        prev_c = c;
        if k == time_steps {
            let g = finite("g", problem.terminal_at(x), t, x)?;
            value = integral + g * discount;
        }
        Ok(())
    })?;
    if !value.is_finite() {
        return Err(Error::NonFiniteSample { value });
    }
    Ok(value)
}

/// Per-point FK statistics: sample mean and unbiased sample variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkEnsemble {
    pub points: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub sample_size: usize,
}

impl FkEnsemble {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Variance of each mean, `ř(xᵢ)/M`.
    pub fn mean_variance(&self) -> Vec<f64> {
        let m = self.sample_size as f64;
        self.variance.iter().map(|r| r / m).collect()
    }

    /// Maps an ensemble of `ṽ = exp(−v/λ)` samples back to `v`. Means go
    /// through `−λ log`; variances use the delta method `λ² ř / ǔ²`.
    pub fn cole_hopf_inverse(&self, lambda: f64) -> Result<FkEnsemble> {
        let mean = cole_hopf_inverse(&self.mean, lambda)?;
        let variance = self
            .variance
            .iter()
            .zip(&self.mean)
            .map(|(r, u)| lambda * lambda * r / (u * u))
            .collect();
        Ok(FkEnsemble {
            points: self.points.clone(),
            mean,
            variance,
            sample_size: self.sample_size,
        })
    }
}

/// Sample mean and unbiased variance, summed in index order.
pub fn mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|u| (u - mean) * (u - mean)).sum();
    (
        mean,
        if samples.len() > 1 {
            ss / (n - 1.0)
        } else {
            0.0
        },
    )
}

/// FK sampling at arbitrary points: `M` samples per point with the stream
/// for sample `j` at point `i` derived from `(seed, i, j)`.
pub fn fk_ensemble_at(
    problem: &PdeProblem,
    points: &[Vec<f64>],
    config: &FkConfig,
) -> Result<FkEnsemble> {
    config.validate()?;
    if problem.orientation() != Orientation::TerminalValue {
        return Err(Error::InvalidArgument(
            "FK sampling needs a terminal-value problem; reverse time first".into(),
        ));
    }
    let m = config.sample_size;
    let samples: Vec<f64> = (0..points.len() * m)
        .into_par_iter()
        .map(|flat| {
            let (i, j) = (flat / m, flat % m);
            let mut rng = rng::stream(config.seed, Purpose::FkPath, i as u64, j as u64);
            fk_sample(problem, &points[i], 0.0, config.time_steps, &mut rng).map_err(|e| {
                Error::Sampling {
                    point: i,
                    sample: j,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<_>>()?;

    let (mean, variance) = samples.chunks(m).map(mean_and_variance).unzip();
    Ok(FkEnsemble {
        points: points.to_vec(),
        mean,
        variance,
        sample_size: m,
    })
}

pub fn fk_ensemble(
    problem: &PdeProblem,
    domain: &QueryDomain,
    config: &FkConfig,
) -> Result<FkEnsemble> {
    fk_ensemble_at(problem, &domain.points(), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{Drift, Scalar};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn deterministic(dim: usize) -> PdeProblem {
        PdeProblem::new(dim, dim, 1.0, Arc::new(|_| 1.0), Orientation::TerminalValue).unwrap()
    }

    #[test]
    fn constant_drift_is_exact() {
        let p = deterministic(3)
            .with_drift(Drift::Constant(vec![1.0, 0.0, 0.0]))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in [1, 7, 100] {
            let path = euler_maruyama_path(&p, &[0.25, 0.5, 0.5], 0.0, k, &mut rng).unwrap();
            assert_eq!(path.states.len(), k + 1);
            assert_eq!(path.times[0], 0.0);
            assert!((path.times[k] - 1.0).abs() < 1e-15);
            let end = &path.states[k];
            assert!((end[0] - 1.25).abs() < 1e-12);
            assert_eq!(&end[1..], &[0.5, 0.5]);
        }
    }

    #[test]
    fn blowup_is_reported() {
        let p = deterministic(1)
            .with_drift(Drift::Field(Arc::new(|_, x, out| {
                out[0] = 1e300 * x[0] * x[0]
            })))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = euler_maruyama_path(&p, &[10.0], 0.0, 10, &mut rng).unwrap_err();
        assert!(matches!(err, Error::PathBlowup { step, .. } if step >= 1));
    }

    #[test]
    fn overflowing_discount_is_reported() {
        let p = deterministic(1).with_reaction(Scalar::Constant(-1e6));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = fk_sample(&p, &[0.0], 0.0, 10, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { .. }));
    }

    #[test]
    fn terminal_only_sample() {
        let p = PdeProblem::new(
            2,
            2,
            1.0,
            Arc::new(|x| x[0] * 3.0 + x[1]),
            Orientation::TerminalValue,
        )
        .unwrap()
        .with_diffusion(Diffusion::Isotropic(0.4))
        .unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let u = fk_sample(&p, &[0.1, 0.2], 0.0, 50, &mut a).unwrap();
        let path = euler_maruyama_path(&p, &[0.1, 0.2], 0.0, 50, &mut b).unwrap();
        let end = &path.states[50];
        assert_eq!(u, end[0] * 3.0 + end[1]);
    }

    #[test]
    fn deterministic_discount() {
        let p = deterministic(1).with_reaction(Scalar::Constant(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = fk_sample(&p, &[0.0], 0.0, 100, &mut rng).unwrap();
        assert!((u - (-1.0_f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn constant_source_integrates_exactly() {
        let p = PdeProblem::new(1, 1, 1.0, Arc::new(|_| 0.0), Orientation::TerminalValue)
            .unwrap()
            .with_source(Scalar::Constant(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = fk_sample(&p, &[0.0], 0.0, 37, &mut rng).unwrap();
        assert!((u - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_terminal_is_located() {
        let p = PdeProblem::new(
            1,
            1,
            1.0,
            Arc::new(|_| f64::NAN),
            Orientation::TerminalValue,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = fk_sample(&p, &[0.0], 0.0, 4, &mut rng).unwrap_err();
        assert!(matches!(
            err,
            Error::NonFiniteCoefficient {
                coefficient: "g",
                ..
            }
        ));
    }

    #[test]
    fn initial_value_problem_rejected() {
        let p = deterministic(1).reverse_time();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(fk_sample(&p, &[0.0], 0.0, 4, &mut rng).is_err());
    }

    #[test]
    fn ensemble_of_deterministic_problem() {
        let p = PdeProblem::new(2, 2, 1.0, Arc::new(|x| x[0]), Orientation::TerminalValue).unwrap();
        let dom = QueryDomain::unit_slice(2, 6).unwrap();
        let ens = fk_ensemble(&p, &dom, &FkConfig::new(5, 1)).unwrap();
        for (i, pt) in dom.points().iter().enumerate() {
            assert_eq!(ens.mean[i], pt[0]);
            assert_eq!(ens.variance[i], 0.0);
        }
    }

    #[test]
    fn ensemble_needs_two_samples() {
        let p = deterministic(1);
        let dom = QueryDomain::unit_slice(1, 3).unwrap();
        assert!(fk_ensemble(&p, &dom, &FkConfig::new(1, 0)).is_err());
    }

    #[test]
    fn sampling_errors_carry_indices() {
        let p = PdeProblem::new(
            1,
            1,
            1.0,
            Arc::new(|x| if x[0] > 0.9 { f64::INFINITY } else { 0.0 }),
            Orientation::TerminalValue,
        )
        .unwrap();
        let dom = QueryDomain::unit_slice(1, 3).unwrap();
        let err = fk_ensemble(&p, &dom, &FkConfig::new(3, 0)).unwrap_err();
        assert!(matches!(err, Error::Sampling { point: 2, .. }));
    }

    #[test]
    fn cole_hopf_delta_method() {
        let ens = FkEnsemble {
            points: vec![vec![0.0]],
            mean: vec![0.5],
            variance: vec![0.01],
            sample_size: 10,
        };
        let back = ens.cole_hopf_inverse(2.0).unwrap();
        assert!((back.mean[0] - 2.0 * 2.0_f64.ln()).abs() < 1e-15);
        assert!((back.variance[0] - 4.0 * 0.01 / 0.25).abs() < 1e-15);
    }
}
