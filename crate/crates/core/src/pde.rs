//! Kolmogorov PDE problem instances.
//!
//! A [`PdeProblem`] in terminal-value orientation describes
//!
//! ```text
//! ∂ₜv + ½ tr{a aᵀ ∂ₓₓv} + bᵀ∂ₓv − c v + h = 0,   (t, x) ∈ [0, T) × ℝᵈ
//! v(T, x) = g(x)
//! ```
//!
//! whose Feynman-Kac representation is
//! `v(t,x) = E[∫ₜᵀ h(s,X) e^{−∫ₜˢ c} ds + g(X(T)) e^{−∫ₜᵀ c}]` with
//! `dX = b dt + a dW`. The `reaction` coefficient is therefore the discount
//! rate of the path functional.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Writes `b(t, x)` (length d) into the output slice.
pub type VectorField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Writes `a(t, x)` row-major (d × m) into the output slice.
pub type MatrixField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
pub type SpatialField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Drift {
    Zero,
    Constant(Vec<f64>),
    Field(VectorField),
}

#[derive(Clone)]
pub enum Diffusion {
    /// `a = σ·I` with m = d.
    Isotropic(f64),
    /// Constant d × m matrix.
    Constant(DMatrix<f64>),
    Field(MatrixField),
}

#[derive(Clone)]
pub enum Scalar {
    Zero,
    Constant(f64),
    Field(ScalarField),
}

impl Scalar {
    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Scalar::Zero => 0.0,
            Scalar::Constant(v) => *v,
            Scalar::Field(f) => f(t, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Scalar::Zero)
    }

    fn reversed(&self, horizon: f64) -> Scalar {
        match self {
            Scalar::Field(f) => {
                let f = Arc::clone(f);
                Scalar::Field(Arc::new(move |s, x| f(horizon - s, x)))
            }
            other => other.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Orientation {
    /// `v(T, x) = g(x)` given; solve backwards for `v(0, ·)`.
    TerminalValue,
    /// `w(0, x) = g(x)` given; the target is `w(T, ·)`.
    InitialValue,
}

impl Orientation {
    fn flipped(self) -> Self {
        match self {
            Orientation::TerminalValue => Orientation::InitialValue,
            Orientation::InitialValue => Orientation::TerminalValue,
        }
    }
}

#[derive(Clone)]
pub struct PdeProblem {
    dim: usize,
    noise_dim: usize,
    horizon: f64,
    drift: Drift,
    diffusion: Diffusion,
    reaction: Scalar,
    source: Scalar,
    terminal: SpatialField,
    orientation: Orientation,
}

impl fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeProblem")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("horizon", &self.horizon)
            .field("orientation", &self.orientation)
            .finish_non_exhaustive()
    }
}

impl PdeProblem {
    /// Pure diffusion problem `b ≡ 0, a ≡ 0, c ≡ 0, h ≡ 0` with the given
    /// condition; use the `with_*` builders to set coefficients.
    pub fn new(
        dim: usize,
        noise_dim: usize,
        horizon: f64,
        terminal: SpatialField,
        orientation: Orientation,
    ) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return Err(Error::InvalidArgument(
                "dimension and noise dimension must be at least 1".into(),
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            dim,
            noise_dim,
            horizon,
            drift: Drift::Zero,
            diffusion: Diffusion::Constant(DMatrix::zeros(dim, noise_dim)),
            reaction: Scalar::Zero,
            source: Scalar::Zero,
            terminal,
            orientation,
        })
    }

    pub fn with_drift(mut self, drift: Drift) -> Result<Self> {
        if let Drift::Constant(b) = &drift {
            if b.len() != self.dim {
                return Err(Error::InvalidArgument(format!(
                    "drift has length {}, expected {}",
                    b.len(),
                    self.dim
                )));
            }
        }
        self.drift = drift;
        Ok(self)
    }

    pub fn with_diffusion(mut self, diffusion: Diffusion) -> Result<Self> {
        match &diffusion {
            Diffusion::Isotropic(_) if self.noise_dim != self.dim => {
                return Err(Error::InvalidArgument(
                    "isotropic diffusion requires noise_dim == dim".into(),
                ))
            }
            Diffusion::Constant(a) if a.shape() != (self.dim, self.noise_dim) => {
                return Err(Error::InvalidArgument(format!(
                    "diffusion is {:?}, expected ({}, {})",
                    a.shape(),
                    self.dim,
                    self.noise_dim
                )))
            }
            _ => {}
        }
        self.diffusion = diffusion;
        Ok(self)
    }

    pub fn with_reaction(mut self, reaction: Scalar) -> Self {
        self.reaction = reaction;
        self
    }

    pub fn with_source(mut self, source: Scalar) -> Self {
        self.source = source;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn reaction(&self) -> &Scalar {
        &self.reaction
    }

    pub fn source(&self) -> &Scalar {
        &self.source
    }

    #[inline]
    pub fn drift_at(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.fill(0.0),
            Drift::Constant(b) => out.copy_from_slice(b),
            Drift::Field(f) => f(t, x, out),
        }
    }

    /// Row-major `d × m` diffusion matrix at `(t, x)`.
    pub fn diffusion_at(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let m = self.noise_dim;
        match &self.diffusion {
            Diffusion::Isotropic(s) => {
                out.fill(0.0);
                for i in 0..self.dim {
                    out[i * m + i] = *s;
                }
            }
            Diffusion::Constant(a) => {
                for i in 0..self.dim {
                    for j in 0..m {
                        out[i * m + j] = a[(i, j)];
                    }
                }
            }
            Diffusion::Field(f) => f(t, x, out),
        }
    }

    #[inline]
    pub fn reaction_at(&self, t: f64, x: &[f64]) -> f64 {
        self.reaction.eval(t, x)
    }

    #[inline]
    pub fn source_at(&self, t: f64, x: &[f64]) -> f64 {
        self.source.eval(t, x)
    }

    #[inline]
    pub fn terminal_at(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    /// Time reversal `φ(s, x) ↦ φ(T − s, x)` for every coefficient; flips the
    /// orientation and keeps the condition `g`.
    pub fn reverse_time(&self) -> PdeProblem {
        let horizon = self.horizon;
        let drift = match &self.drift {
            Drift::Field(f) => {
                let f = Arc::clone(f);
                Drift::Field(Arc::new(move |s, x, out| f(horizon - s, x, out)))
            }
            other => other.clone(),
        };
        let diffusion = match &self.diffusion {
            Diffusion::Field(f) => {
                let f = Arc::clone(f);
                Diffusion::Field(Arc::new(move |s, x, out| f(horizon - s, x, out)))
            }
            other => other.clone(),
        };
        PdeProblem {
            dim: self.dim,
            noise_dim: self.noise_dim,
            horizon,
            drift,
            diffusion,
            reaction: self.reaction.reversed(horizon),
            source: self.source.reversed(horizon),
            terminal: Arc::clone(&self.terminal),
            orientation: self.orientation.flipped(),
        }
    }

    /// Returns the problem in terminal-value orientation, reversing time if
    /// needed.
    pub fn to_terminal_value(&self) -> PdeProblem {
        match self.orientation {
            Orientation::TerminalValue => self.clone(),
            Orientation::InitialValue => self.reverse_time(),
        }
    }
}

/// One-dimensional slice of ℝᵈ: `anchor` with coordinate `slice_axis`
/// varying over `[lo, hi]`, carrying the normalized Lebesgue measure.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QueryDomain {
    slice_axis: usize,
    lo: f64,
    hi: f64,
    anchor: Vec<f64>,
    grid_points: usize,
}

impl QueryDomain {
    pub fn new(
        slice_axis: usize,
        lo: f64,
        hi: f64,
        anchor: Vec<f64>,
        grid_points: usize,
    ) -> Result<Self> {
        if slice_axis >= anchor.len() {
            return Err(Error::InvalidArgument(format!(
                "slice axis {slice_axis} out of range for dimension {}",
                anchor.len()
            )));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "slice range [{lo}, {hi}] is empty"
            )));
        }
        if grid_points == 0 {
            return Err(Error::InvalidArgument(
                "grid_points must be positive".into(),
            ));
        }
        Ok(Self {
            slice_axis,
            lo,
            hi,
            anchor,
            grid_points,
        })
    }

    /// Axis 0 over `[0, 1]` with every other coordinate at 0.5.
    pub fn unit_slice(dim: usize, grid_points: usize) -> Result<Self> {
        Self::new(0, 0.0, 1.0, vec![0.5; dim], grid_points)
    }

    pub fn with_grid_points(&self, grid_points: usize) -> Result<Self> {
        Self::new(
            self.slice_axis,
            self.lo,
            self.hi,
            self.anchor.clone(),
            grid_points,
        )
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn slice_axis(&self) -> usize {
        self.slice_axis
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Slice coordinate of grid node `i`; a single node sits at the midpoint.
    pub fn node_coordinate(&self, i: usize) -> f64 {
        if self.grid_points == 1 {
            return 0.5 * (self.lo + self.hi);
        }
        self.lo + i as f64 * (self.hi - self.lo) / (self.grid_points - 1) as f64
    }

    pub fn point_at(&self, s: f64) -> Vec<f64> {
        let mut p = self.anchor.clone();
        p[self.slice_axis] = s;
        p
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.grid_points)
            .map(|i| self.point_at(self.node_coordinate(i)))
            .collect()
    }

    /// `n` equally spaced slice coordinates including both ends.
    pub fn uniform_coordinates(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![0.5 * (self.lo + self.hi)],
            _ => (0..n)
                .map(|i| self.lo + i as f64 * (self.hi - self.lo) / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct CoefficientProbe {
    pub name: &'static str,
    /// Max of `|φ(t,x) − φ(t,x′)| / |x − x′|` over sampled pairs.
    pub max_lipschitz_ratio: f64,
    /// Max of `|φ(t, 0)|` over sampled times.
    pub max_at_origin: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ValidationReport {
    pub coefficients: Vec<CoefficientProbe>,
    /// `sup |c|` did not grow when the probe box was enlarged tenfold.
    pub reaction_bounded: bool,
    pub max_abs_reaction: f64,
}

impl ValidationReport {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientProbe> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

const PROBE_LO: f64 = -1.0;
const PROBE_HI: f64 = 2.0;

/// Randomized probe of the regularity assumptions on `b, a, c, h`: empirical
/// Lipschitz ratios in `x` over `[−1, 2]ᵈ`, values at the origin, and a
/// growth test for boundedness of `c`. Advisory; only non-finite
/// coefficient values are errors.
pub fn validate_lipschitz(
    problem: &PdeProblem,
    probe_count: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if probe_count < 2 {
        return Err(Error::InvalidArgument(
            "probe_count must be at least 2".into(),
        ));
    }
    let d = problem.dim;
    let m = problem.noise_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = vec![0.0; d];

    let mut buf_a = vec![0.0; d * m];
    let mut buf_b = vec![0.0; d * m];
    let mut ratios = [0.0_f64; 4];
    let mut at_origin = [0.0_f64; 4];
    let mut max_c = 0.0_f64;
    let mut max_c_wide = 0.0_f64;

    let eval = |which: usize, t: f64, x: &[f64], out: &mut [f64]| -> Result<usize> {
        let (name, len) = match which {
            0 => {
                problem.drift_at(t, x, &mut out[..d]);
                ("b", d)
            }
            1 => {
                problem.diffusion_at(t, x, &mut out[..d * m]);
                ("a", d * m)
            }
            2 => {
                out[0] = problem.reaction_at(t, x);
                ("c", 1)
            }
            _ => {
                out[0] = problem.source_at(t, x);
                ("h", 1)
            }
        };
        if out[..len].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient {
                coefficient: name,
                t,
                x: x.to_vec(),
            });
        }
        Ok(len)
    };

    for _ in 0..probe_count {
        let t = rng.random::<f64>() * problem.horizon;
        let x: Vec<f64> = (0..d)
            .map(|_| rng.random_range(PROBE_LO..PROBE_HI))
            .collect();
        let y: Vec<f64> = (0..d)
            .map(|_| rng.random_range(PROBE_LO..PROBE_HI))
            .collect();
        let wide: Vec<f64> = (0..d)
            .map(|_| 10.0 * rng.random_range(PROBE_LO..PROBE_HI))
            .collect();
        let dist = x
            .iter()
            .zip(&y)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();

        for which in 0..4 {
            let len = eval(which, t, &origin, &mut buf_a)?;
            let norm0 = buf_a[..len].iter().map(|v| v * v).sum::<f64>().sqrt();
            at_origin[which] = at_origin[which].max(norm0);

            eval(which, t, &x, &mut buf_a)?;
            eval(which, t, &y, &mut buf_b)?;
            if which == 2 {
                max_c = max_c.max(buf_a[0].abs()).max(buf_b[0].abs());
            }
            let diff = buf_a[..len]
                .iter()
                .zip(&buf_b[..len])
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            if dist > 0.0 {
                ratios[which] = ratios[which].max(diff / dist);
            }
        }
        let mut c_wide = [0.0];
        eval(2, t, &wide, &mut c_wide)?;
        max_c_wide = max_c_wide.max(c_wide[0].abs());
    }
    max_c = max_c.max(at_origin[2]);

    let names = ["b", "a", "c", "h"];
    let coefficients = (0..4)
        .map(|i| CoefficientProbe {
            name: names[i],
            max_lipschitz_ratio: ratios[i],
            max_at_origin: at_origin[i],
        })
        .collect();
    Ok(ValidationReport {
        coefficients,
        reaction_bounded: max_c_wide <= 2.0 * max_c + 1e-12,
        max_abs_reaction: max_c.max(max_c_wide),
    })
}

/// Result of the Cole-Hopf linearization of a quadratic-control HJB equation.
#[derive(Clone, Debug)]
pub struct ColeHopf {
    pub problem: PdeProblem,
    pub lambda: f64,
    /// `‖λ B R⁻¹ Bᵀ − a aᵀ‖_F / ‖a aᵀ‖_F`.
    pub residual: f64,
}

const COLE_HOPF_TOL: f64 = 1e-10;

/// Linearizes
/// `−∂ₜv = ℓ − ½ ∂ₓvᵀ B R⁻¹ Bᵀ ∂ₓv + ½ tr{a aᵀ ∂ₓₓv}`, `v(T) = g`
/// through `ṽ = exp(−v/λ)` with `λ B R⁻¹ Bᵀ = a aᵀ`. The result is the
/// terminal-value problem for `ṽ` with discount rate `ℓ/λ` and condition
/// `exp(−g/λ)`.
pub fn cole_hopf_linearize(
    state_cost: SpatialField,
    terminal_cost: SpatialField,
    control_gain: &DMatrix<f64>,
    control_cost: &DMatrix<f64>,
    diffusion: &DMatrix<f64>,
    horizon: f64,
) -> Result<ColeHopf> {
    let d = control_gain.nrows();
    if control_cost.nrows() != control_cost.ncols() || control_gain.ncols() != control_cost.nrows()
    {
        return Err(Error::InvalidArgument(
            "B and R have incompatible shapes".into(),
        ));
    }
    if diffusion.nrows() != d {
        return Err(Error::InvalidArgument(
            "a must have as many rows as B".into(),
        ));
    }
    let r_inv = control_cost
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("R is singular".into()))?;
    let q = control_gain * r_inv * control_gain.transpose();
    let sigma = diffusion * diffusion.transpose();

    let lambda = sigma.trace() / q.trace();
    let scale = sigma.norm();
    let residual = if lambda.is_finite() && scale > 0.0 {
        (&q * lambda - &sigma).norm() / scale
    } else {
        f64::INFINITY
    };
    if !(lambda > 0.0) || !(residual <= COLE_HOPF_TOL) {
        return Err(Error::LinearizationInfeasible { residual });
    }

    let terminal: SpatialField = Arc::new(move |x| (-terminal_cost(x) / lambda).exp());
    let rate: ScalarField = Arc::new(move |_t, x| state_cost(x) / lambda);
    let noise_dim = diffusion.ncols();
    let isotropic = noise_dim == d && {
        let s = diffusion[(0, 0)];
        (diffusion - DMatrix::identity(d, d) * s).norm() == 0.0
    };
    let diffusion = if isotropic {
        Diffusion::Isotropic(diffusion[(0, 0)])
    } else {
        Diffusion::Constant(diffusion.clone())
    };
    let problem = PdeProblem::new(d, noise_dim, horizon, terminal, Orientation::TerminalValue)?
        .with_diffusion(diffusion)?
        .with_reaction(Scalar::Field(rate));
    Ok(ColeHopf {
        problem,
        lambda,
        residual,
    })
}

/// `v = −λ log ṽ` elementwise.
pub fn cole_hopf_inverse(transformed: &[f64], lambda: f64) -> Result<Vec<f64>> {
    transformed
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 {
                Ok(-lambda * value.ln())
            } else {
                Err(Error::NonPositiveTransformed { index, value })
            }
        })
        .collect()
}

/// `ṽ = exp(−v/λ)` elementwise.
pub fn cole_hopf_forward(values: &[f64], lambda: f64) -> Vec<f64> {
    values.iter().map(|v| (-v / lambda).exp()).collect()
}
