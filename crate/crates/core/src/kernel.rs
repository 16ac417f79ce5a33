//! Matérn covariance functions.
//!
//! `k(x, y) = σ_f² · 2^{1−α}/Γ(α) · z^α K_α(z)`, `z = √(2α)‖x − y‖/h`.
//! Orders 1/2, 3/2 and 5/2 use their closed forms; any other order goes
//! through [`crate::bessel`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bessel::ln_bessel_k;
use crate::error::{Error, Result};

/// Below this `r/h` the kernel returns `σ_f²` exactly.
const ZERO_DISTANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub smoothness: f64,
    pub length_scale: f64,
    pub amplitude: f64,
}

impl KernelSpec {
    pub fn new(smoothness: f64, length_scale: f64, amplitude: f64) -> Result<Self> {
        for (name, v) in [
            ("smoothness", smoothness),
            ("length_scale", length_scale),
            ("amplitude", amplitude),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            smoothness,
            length_scale,
            amplitude,
        })
    }

    pub fn with_length_scale(self, length_scale: f64) -> Self {
        Self {
            length_scale,
            ..self
        }
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    /// Unit-amplitude correlation at distance `r`.
    pub fn correlation(&self, r: f64) -> f64 {
        let u = r / self.length_scale;
        if u < ZERO_DISTANCE {
            return 1.0;
        }
        matern_profile(self.smoothness, (2.0 * self.smoothness).sqrt() * u)
    }

    /// `∂k/∂log h` at distance `r`, unit amplitude.
    pub fn correlation_dlog_length(&self, r: f64) -> f64 {
        let u = r / self.length_scale;
        if u < ZERO_DISTANCE {
            return 0.0;
        }
        matern_dlog_length(self.smoothness, (2.0 * self.smoothness).sqrt() * u)
    }

    pub fn eval_distance(&self, r: f64) -> f64 {
        self.amplitude * self.correlation(r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum HalfInteger {
    One,
    Three,
    Five,
}

fn half_integer(alpha: f64) -> Option<HalfInteger> {
    match alpha {
        a if a == 0.5 => Some(HalfInteger::One),
        a if a == 1.5 => Some(HalfInteger::Three),
        a if a == 2.5 => Some(HalfInteger::Five),
        _ => None,
    }
}

/// `2^{1−α}/Γ(α) z^α K_α(z)` through the Bessel function, for any order.
pub fn matern_profile_bessel(alpha: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 1.0;
    }
    ((1.0 - alpha) * std::f64::consts::LN_2 - ln_gamma(alpha)
        + alpha * z.ln()
        + ln_bessel_k(alpha, z))
    .exp()
}

/// Unit-amplitude Matérn correlation as a function of the scaled distance
/// `z = √(2α) r/h`.
pub fn matern_profile(alpha: f64, z: f64) -> f64 {
    match half_integer(alpha) {
        Some(HalfInteger::One) => (-z).exp(),
        Some(HalfInteger::Three) => (1.0 + z) * (-z).exp(),
        Some(HalfInteger::Five) => (1.0 + z + z * z / 3.0) * (-z).exp(),
        None => matern_profile_bessel(alpha, z),
    }
}

/// `−z · d/dz profile(z) = 2^{1−α}/Γ(α) z^{α+1} K_{α−1}(z)`, the derivative of
/// the correlation with respect to `log h`.
pub fn matern_dlog_length(alpha: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    match half_integer(alpha) {
        Some(HalfInteger::One) => z * (-z).exp(),
        Some(HalfInteger::Three) => z * z * (-z).exp(),
        Some(HalfInteger::Five) => z * z * (1.0 + z) / 3.0 * (-z).exp(),
        None => ((1.0 - alpha) * std::f64::consts::LN_2 - ln_gamma(alpha)
            + (alpha + 1.0) * z.ln()
            + ln_bessel_k(alpha - 1.0, z))
        .exp(),
    }
}

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn matern(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    spec.eval_distance(distance(x, y))
}

/// `[k(xᵢ, xⱼ)]`, filled from the upper triangle so it is exactly symmetric.
pub fn gram_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.amplitude;
        for j in (i + 1)..n {
            let v = matern(spec, &points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `[k(x₁, x), …, k(x_N, x)]ᵀ`.
pub fn cross_vector(spec: &KernelSpec, points: &[Vec<f64>], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(points.len(), points.iter().map(|p| matern(spec, p, x)))
}

/// Gram-matrix derivatives with respect to the log hyperparameters.
#[derive(Clone, Debug)]
pub struct KernelGrad {
    pub d_log_length: DMatrix<f64>,
    pub d_log_amplitude: DMatrix<f64>,
}

pub fn kernel_grad(spec: &KernelSpec, points: &[Vec<f64>]) -> KernelGrad {
    let n = points.len();
    let mut dl = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = spec.amplitude * spec.correlation_dlog_length(distance(&points[i], &points[j]));
            dl[(i, j)] = v;
            dl[(j, i)] = v;
        }
    }
    KernelGrad {
        d_log_length: dl,
        d_log_amplitude: gram_matrix(spec, points),
    }
}
