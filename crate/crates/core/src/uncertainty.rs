//! Posterior-variance diagnostics: integrated MSE, Nyström estimates of the
//! kernel operator spectrum, the spectral lower bound on the IMSE, and the
//! Chebyshev bound on the error of the minimum sample variance.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::GpPosterior;
use crate::kernel::{gram_matrix, KernelSpec};
use crate::linalg::sym_eigenvalues;
use crate::pde::QueryDomain;
use crate::rng::{self, Purpose};
use crate::sde::FkEnsemble;

pub const DEFAULT_IMSE_QUAD_POINTS: usize = 200;
pub const DEFAULT_EIGEN_SAMPLES: usize = 200;

/// Trapezoidal weights for `n ≥ 2` equally spaced nodes on a unit interval.
pub(crate) fn trapezoid_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect()
}

/// `∫ σ̃²(x) dν(x)` over the slice with `ν` the normalized Lebesgue measure.
pub fn imse(post: &GpPosterior, domain: &QueryDomain, quad_points: usize) -> Result<f64> {
    if quad_points < 2 {
        return Err(Error::InvalidArgument(
            "quad_points must be at least 2".into(),
        ));
    }
    let weights = trapezoid_weights(quad_points);
    Ok(domain
        .uniform_coordinates(quad_points)
        .into_iter()
        .zip(weights)
        .map(|(s, w)| w * post.variance(&domain.point_at(s)))
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    /// Descending, nonnegative.
    pub eigenvalues: Vec<f64>,
    pub sample_count: usize,
    pub measure: String,
}

impl EigenEstimate {
    pub fn from_values(mut eigenvalues: Vec<f64>, sample_count: usize, measure: String) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        for v in eigenvalues.iter_mut() {
            *v = v.max(0.0);
        }
        Self {
            eigenvalues,
            sample_count,
            measure,
        }
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Eigenvalues of `gram / S`, clamped at zero and sorted descending.
pub fn nystrom_eigenvalues(gram: &DMatrix<f64>) -> Vec<f64> {
    let s = gram.nrows() as f64;
    sym_eigenvalues(gram)
        .into_iter()
        .map(|v| (v / s).max(0.0))
        .collect()
}

/// Draws `S` slice points from `ν` and returns the Nyström estimate of the
/// integral operator's spectrum.
pub fn estimate_eigenvalues(
    spec: &KernelSpec,
    domain: &QueryDomain,
    samples: usize,
    seed: u64,
) -> Result<EigenEstimate> {
    if samples < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 eigen samples".into(),
        ));
    }
    let mut rng = rng::stream(seed, Purpose::Nystrom, 0, 0);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| domain.point_at(rng.random_range(domain.lo()..=domain.hi())))
        .collect();
    let values = nystrom_eigenvalues(&gram_matrix(spec, &points));
    Ok(EigenEstimate::from_values(
        values,
        samples,
        format!(
            "uniform on axis {} over [{}, {}]",
            domain.slice_axis(),
            domain.lo(),
            domain.hi()
        ),
    ))
}

/// `r_min · Σ_p λ_p / (r_min + N M λ_p)`.
pub fn imse_lower_bound(eigen: &EigenEstimate, r_min: f64, n: usize, m: usize) -> Result<f64> {
    if !(r_min > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "r_min must be positive, got {r_min}"
        )));
    }
    let nm = n as f64 * m as f64;
    Ok(r_min
        * eigen
            .eigenvalues
            .iter()
            .map(|l| l / (r_min + nm * l))
            .sum::<f64>())
}

/// `1 − Πᵢ max{1 − 2 r(xᵢ)² / ((ε−δ)² (M−1)), 0}`.
pub fn chebyshev_variance_bound(
    r_values: &[f64],
    m: usize,
    epsilon: f64,
    delta: f64,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument("M must be at least 2".into()));
    }
    if !(delta >= 0.0 && epsilon > delta) {
        return Err(Error::InvalidArgument(format!(
            "need ε > δ ≥ 0, got ε={epsilon}, δ={delta}"
        )));
    }
    if r_values.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidArgument(
            "variances must be nonnegative".into(),
        ));
    }
    let gap2 = (epsilon - delta) * (epsilon - delta) * (m - 1) as f64;
    let survive: f64 = r_values
        .iter()
        .map(|r| (1.0 - 2.0 * r * r / gap2).max(0.0))
        .product();
    Ok((1.0 - survive).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservativeCheck {
    pub holds: bool,
    /// `min over the grid of N·M·L_IMSE(N, M)`.
    pub constant: f64,
}

pub fn conservative_bound_check(
    eigen: &EigenEstimate,
    r_min: f64,
    nm_grid: &[(usize, usize)],
) -> Result<ConservativeCheck> {
    if nm_grid.is_empty() {
        return Err(Error::InvalidArgument("empty (N, M) grid".into()));
    }
    let mut constant = f64::INFINITY;
    for &(n, m) in nm_grid {
        let l = imse_lower_bound(eigen, r_min, n, m)?;
        constant = constant.min(n as f64 * m as f64 * l);
    }
    Ok(ConservativeCheck {
        holds: constant > 0.0,
        constant,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RMinEstimate {
    /// `minᵢ ř(xᵢ)`.
    pub raw: f64,
    /// `raw` floored at `1e−12 · maxᵢ ř(xᵢ)`.
    pub floored: f64,
}

pub fn r_min_estimate(ensemble: &FkEnsemble) -> RMinEstimate {
    let raw = ensemble
        .variance
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let max = ensemble.variance.iter().copied().fold(0.0, f64::max);
    let raw = if raw.is_finite() { raw } else { 0.0 };
    RMinEstimate {
        raw,
        floored: raw.max(1e-12 * max),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub imse: f64,
    pub l_imse: f64,
    pub r_min_estimate: f64,
    pub chebyshev_bound: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub conservative_constant: f64,
    pub conservative_constant_check: bool,
    pub top_eigenvalues: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub quad_points: usize,
    pub eigen_samples: usize,
    pub seed: u64,
    /// `ε` as a multiple of `ř_min`.
    pub relative_epsilon: f64,
    /// `δ` as a multiple of `ř_min`.
    pub relative_delta: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            quad_points: DEFAULT_IMSE_QUAD_POINTS,
            eigen_samples: DEFAULT_EIGEN_SAMPLES,
            seed: 0,
            relative_epsilon: 0.5,
            relative_delta: 0.0,
        }
    }
}

/// Everything the uncertainty analysis has to say about one fitted
/// posterior. The Chebyshev bound plugs the sample variances in for `r`.
pub fn uncertainty_report(
    post: &GpPosterior,
    ensemble: &FkEnsemble,
    domain: &QueryDomain,
    options: &ReportOptions,
) -> Result<UncertaintyReport> {
    let imse = imse(post, domain, options.quad_points)?;
    let eigen = estimate_eigenvalues(post.spec(), domain, options.eigen_samples, options.seed)?;
    let r_min = r_min_estimate(ensemble).floored;
    let (n, m) = (ensemble.len(), ensemble.sample_size);
    let (l_imse, conservative) = if r_min > 0.0 {
        let grid = [(n, m), (2 * n, m), (n, 2 * m), (2 * n, 2 * m)];
        (
            imse_lower_bound(&eigen, r_min, n, m)?,
            conservative_bound_check(&eigen, r_min, &grid)?,
        )
    } else {
        (
            0.0,
            ConservativeCheck {
                holds: false,
                constant: 0.0,
            },
        )
    };
    let epsilon = options.relative_epsilon * r_min;
    let delta = options.relative_delta * r_min;
    let chebyshev_bound = if epsilon > delta {
        chebyshev_variance_bound(&ensemble.variance, m, epsilon, delta)?
    } else {
        1.0
    };
    Ok(UncertaintyReport {
        imse,
        l_imse,
        r_min_estimate: r_min,
        chebyshev_bound,
        epsilon,
        delta,
        conservative_constant: conservative.constant,
        conservative_constant_check: conservative.holds,
        top_eigenvalues: eigen.eigenvalues.iter().take(10).copied().collect(),
    })
}
