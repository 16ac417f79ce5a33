//! Piecewise-linear interpolation of FK means and the squared L² error used
//! to score every estimator.

use crate::error::{Error, Result};
use crate::pde::QueryDomain;
use crate::uncertainty::trapezoid_weights;

/// Interpolates `values` (one per grid node of `domain`) at slice coordinate
/// `s`. No extrapolation.
pub fn linear_interpolate(domain: &QueryDomain, values: &[f64], s: f64) -> Result<f64> {
    let n = domain.grid_points();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "linear interpolation needs N ≥ 2".into(),
        ));
    }
    if values.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} values for {n} grid points",
            values.len()
        )));
    }
    let (lo, hi) = (domain.lo(), domain.hi());
    if !(lo..=hi).contains(&s) {
        return Err(Error::OutOfDomain { value: s, lo, hi });
    }
    let pos = (s - lo) / (hi - lo) * (n - 1) as f64;
    let i = (pos.floor() as usize).min(n - 2);
    let frac = pos - i as f64;
    if frac == 0.0 {
        return Ok(values[i]);
    }
    if frac == 1.0 {
        return Ok(values[i + 1]);
    }
    Ok(values[i] + frac * (values[i + 1] - values[i]))
}

/// Interpolation at a full point; only its slice coordinate is used.
pub fn linear_interpolate_point(domain: &QueryDomain, values: &[f64], x: &[f64]) -> Result<f64> {
    linear_interpolate(domain, values, x[domain.slice_axis()])
}

/// `∫ (estimate(s) − reference(s))² ds` over the slice by the trapezoidal
/// rule on `quad_points` equally spaced nodes.
pub fn l2_error<E, R>(
    estimate: E,
    reference: R,
    domain: &QueryDomain,
    quad_points: usize,
) -> Result<f64>
where
    E: Fn(f64) -> Result<f64>,
    R: Fn(f64) -> Result<f64>,
{
    if quad_points < 2 {
        return Err(Error::InvalidArgument(
            "quad_points must be at least 2".into(),
        ));
    }
    let width = domain.width();
    let mut total = 0.0;
    for (s, w) in domain
        .uniform_coordinates(quad_points)
        .into_iter()
        .zip(trapezoid_weights(quad_points))
    {
        let diff = estimate(s)? - reference(s)?;
        total += w * width * diff * diff;
    }
    Ok(total)
}
