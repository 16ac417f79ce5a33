//! Gaussian process regression with per-point (heteroscedastic) or constant
//! observation noise.
//!
//! With `A = k_XX + R` and `R` diagonal, the posterior at `x` is
//! `mean = k_xX A⁻¹ Ū` and `var = k(x,x) − k_xX A⁻¹ k_Xx`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cross_vector, gram_matrix, kernel_grad, KernelSpec};
use crate::linalg::{cholesky, SpdFactor};

/// Relative floor for zero heteroscedastic variances.
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    /// FK sample variances `ř(xᵢ)` with `M` samples per point; the noise on
    /// each mean is `ř(xᵢ)/M`.
    Heteroscedastic {
        variances: Vec<f64>,
        sample_size: usize,
    },
    /// Constant noise variance `σ²` on each observation.
    Homoscedastic { variance: f64 },
}

impl NoiseModel {
    pub fn heteroscedastic(variances: Vec<f64>, sample_size: usize) -> Result<Self> {
        if sample_size < 1 {
            return Err(Error::InvalidArgument(
                "sample_size must be positive".into(),
            ));
        }
        if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "heteroscedastic variances must be finite and nonnegative".into(),
            ));
        }
        Ok(NoiseModel::Heteroscedastic {
            variances,
            sample_size,
        })
    }

    pub fn homoscedastic(variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be nonnegative, got {variance}"
            )));
        }
        Ok(NoiseModel::Homoscedastic { variance })
    }

    pub fn is_heteroscedastic(&self) -> bool {
        matches!(self, NoiseModel::Heteroscedastic { .. })
    }

    /// Diagonal of the effective noise matrix for `n` observations.
    pub fn diagonal(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            NoiseModel::Heteroscedastic {
                variances,
                sample_size,
            } => {
                if variances.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "{} noise variances for {n} observations",
                        variances.len()
                    )));
                }
                let m = *sample_size as f64;
                let max = variances.iter().copied().fold(0.0, f64::max);
                let floor = VARIANCE_FLOOR * max / m;
                Ok(variances.iter().map(|r| (r / m).max(floor)).collect())
            }
            NoiseModel::Homoscedastic { variance } => Ok(vec![*variance; n]),
        }
    }
}

fn system_matrix(spec: &KernelSpec, points: &[Vec<f64>], noise: &[f64]) -> DMatrix<f64> {
    let mut a = gram_matrix(spec, points);
    for (i, r) in noise.iter().enumerate() {
        a[(i, i)] += r;
    }
    a
}

fn check_lengths(points: &[Vec<f64>], data: &[f64]) -> Result<()> {
    if points.len() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "{} points but {} observations",
            points.len(),
            data.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("observations must be finite".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GpPosterior {
    spec: KernelSpec,
    points: Vec<Vec<f64>>,
    noise: NoiseModel,
    data_mean: Vec<f64>,
    factor: Option<SpdFactor>,
    weights: DVector<f64>,
}

impl GpPosterior {
    /// The prior itself, as a posterior with no observations.
    pub fn prior(spec: KernelSpec) -> Self {
        Self {
            spec,
            points: Vec::new(),
            noise: NoiseModel::Homoscedastic { variance: 0.0 },
            data_mean: Vec::new(),
            factor: None,
            weights: DVector::zeros(0),
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn data_mean(&self) -> &[f64] {
        &self.data_mean
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn jitter_used(&self) -> f64 {
        self.factor.as_ref().map_or(0.0, SpdFactor::jitter_used)
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        cross_vector(&self.spec, &self.points, x).dot(&self.weights)
    }

    /// Posterior variance `k̃(x, x)`, clamped at zero.
    pub fn variance(&self, x: &[f64]) -> f64 {
        let prior = self.spec.amplitude;
        let Some(factor) = &self.factor else {
            return prior;
        };
        let v = factor.solve_lower(&cross_vector(&self.spec, &self.points, x));
        let var = prior - v.norm_squared();
        if var < 0.0 {
            log::debug!("posterior variance {var:e} clamped to 0 at {x:?}");
            0.0
        } else {
            var
        }
    }

    /// Posterior covariance matrix over `queries`.
    pub fn covariance(&self, queries: &[Vec<f64>]) -> DMatrix<f64> {
        let prior = gram_matrix(&self.spec, queries);
        let Some(factor) = &self.factor else {
            return prior;
        };
        let cross = DMatrix::from_fn(self.points.len(), queries.len(), |i, j| {
            crate::kernel::matern(&self.spec, &self.points[i], &queries[j])
        });
        let v = factor
            .l()
            .solve_lower_triangular(&cross)
            .expect("Cholesky factor has a positive diagonal");
        prior - v.transpose() * v
    }
}

/// Factors `k_XX + R` and precomputes `(k_XX + R)⁻¹ Ū`.
pub fn fit_posterior(
    spec: KernelSpec,
    points: &[Vec<f64>],
    data_mean: &[f64],
    noise: NoiseModel,
) -> Result<GpPosterior> {
    check_lengths(points, data_mean)?;
    if points.is_empty() {
        return Ok(GpPosterior::prior(spec));
    }
    let diag = noise.diagonal(points.len())?;
    let factor = cholesky(&system_matrix(&spec, points, &diag))?;
    let weights = factor.solve(&DVector::from_column_slice(data_mean));
    Ok(GpPosterior {
        spec,
        points: points.to_vec(),
        noise,
        data_mean: data_mean.to_vec(),
        factor: Some(factor),
        weights,
    })
}

pub fn posterior_mean(post: &GpPosterior, x: &[f64]) -> f64 {
    post.mean(x)
}

pub fn posterior_variance(post: &GpPosterior, x: &[f64]) -> f64 {
    post.variance(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Likelihood {
    pub value: f64,
    /// `∂/∂log h`, `∂/∂log σ_f²`, and `∂/∂log σ²` for constant noise.
    pub gradient: Vec<f64>,
    pub jitter_used: f64,
}

/// Gaussian log marginal likelihood `−½ŪᵀA⁻¹Ū − ½log det A − (N/2) log 2π`
/// and its gradient in log hyperparameters.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    points: &[Vec<f64>],
    data_mean: &[f64],
    noise: &NoiseModel,
) -> Result<Likelihood> {
    check_lengths(points, data_mean)?;
    let n = points.len();
    let diag = noise.diagonal(n)?;
    let factor = cholesky(&system_matrix(spec, points, &diag))?;
    let y = DVector::from_column_slice(data_mean);
    let alpha = factor.solve(&y);
    let value = -0.5 * y.dot(&alpha)
        - 0.5 * factor.logdet()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // ∂L/∂θ = ½ tr((ααᵀ − A⁻¹) ∂A/∂θ)
    let w = &alpha * alpha.transpose() - factor.inverse();
    let grads = kernel_grad(spec, points);
    let mut gradient = vec![
        0.5 * w.component_mul(&grads.d_log_length).sum(),
        0.5 * w.component_mul(&grads.d_log_amplitude).sum(),
    ];
    if let NoiseModel::Homoscedastic { variance } = noise {
        gradient.push(0.5 * variance * w.trace());
    }
    Ok(Likelihood {
        value,
        gradient,
        jitter_used: factor.jitter_used(),
    })
}
