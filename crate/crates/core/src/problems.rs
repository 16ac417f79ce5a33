//! Built-in benchmark problems and their closed-form solutions.
//!
//! * `heat`: `∂ₜw = ½ tr{aaᵀ∂ₓₓw}`, `w(0,x) = exp(−λ‖x−c‖²)`.
//! * `advdiff`: the same with advection `bᵀ∂ₓw`, `b = 0.01·𝟙`.
//! * `hjb`: `−∂ₜv = ℓ − ½ ∂ₓvᵀ BR⁻¹Bᵀ ∂ₓv + ½ tr{aaᵀ∂ₓₓv}`, `v(T) = 0`,
//!   with `ℓ(x) = ‖x−c‖²`, `B = R = I`, solved through Cole-Hopf.
//!
//! All use `a = 0.4·I`, `λ = 5`, `T = 1`, `c = 0.5·𝟙`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{
    cole_hopf_linearize, Diffusion, Drift, Orientation, PdeProblem, Scalar, SpatialField,
};

pub const DEFAULT_DIM: usize = 10;
pub const NAMES: [&str; 3] = ["heat", "advdiff", "hjb"];

const SIGMA: f64 = 0.4;
const RATE: f64 = 5.0;
const HORIZON: f64 = 1.0;
const CENTER: f64 = 0.5;
const ADVECTION: f64 = 0.01;

fn sq_dist_to_center(x: &[f64]) -> f64 {
    x.iter().map(|v| (v - CENTER) * (v - CENTER)).sum()
}

/// Constant-coefficient problem given inline in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub dim: usize,
    pub horizon: f64,
    pub orientation: Orientation,
    /// Constant drift; empty means zero.
    #[serde(default)]
    pub drift: Vec<f64>,
    /// Isotropic diffusion scale `σ` in `a = σ·I`.
    pub diffusion: f64,
    #[serde(default)]
    pub reaction: f64,
    #[serde(default)]
    pub source: f64,
    pub condition: Condition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Constant(f64),
    /// `exp(−rate·‖x − center·𝟙‖²)`.
    Gaussian {
        center: f64,
        rate: f64,
    },
    /// `scale·‖x − center·𝟙‖²`.
    Quadratic {
        center: f64,
        scale: f64,
    },
}

impl Condition {
    fn field(&self) -> SpatialField {
        match *self {
            Condition::Constant(v) => Arc::new(move |_| v),
            Condition::Gaussian { center, rate } => Arc::new(move |x: &[f64]| {
                (-rate * x.iter().map(|v| (v - center) * (v - center)).sum::<f64>()).exp()
            }),
            Condition::Quadratic { center, scale } => Arc::new(move |x: &[f64]| {
                scale * x.iter().map(|v| (v - center) * (v - center)).sum::<f64>()
            }),
        }
    }
}

impl InlineProblem {
    pub fn build(&self) -> Result<PdeProblem> {
        if !(self.diffusion >= 0.0) {
            return Err(Error::Config(format!(
                "diffusion must be nonnegative, got {}",
                self.diffusion
            )));
        }
        let drift = if self.drift.is_empty() {
            Drift::Zero
        } else {
            Drift::Constant(self.drift.clone())
        };
        let scalar = |v: f64| {
            if v == 0.0 {
                Scalar::Zero
            } else {
                Scalar::Constant(v)
            }
        };
        Ok(PdeProblem::new(
            self.dim,
            self.dim,
            self.horizon,
            self.condition.field(),
            self.orientation,
        )?
        .with_drift(drift)?
        .with_diffusion(Diffusion::Isotropic(self.diffusion))?
        .with_reaction(scalar(self.reaction))
        .with_source(scalar(self.source)))
    }
}

/// A problem either by built-in name or given inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Named(String),
    Inline(InlineProblem),
}

impl ProblemSpec {
    pub fn label(&self) -> String {
        match self {
            ProblemSpec::Named(name) => name.clone(),
            ProblemSpec::Inline(_) => "inline".into(),
        }
    }

    pub fn prepare(&self, dim: usize) -> Result<PreparedProblem> {
        match self {
            ProblemSpec::Named(name) => named_problem(name, dim),
            ProblemSpec::Inline(p) => Ok(PreparedProblem {
                name: "inline".into(),
                user_problem: p.build()?,
                sampling: p.build()?.to_terminal_value(),
                cole_hopf_lambda: None,
            }),
        }
    }
}

/// A problem ready for FK sampling. The target is `v(0, ·)` of
/// `sampling`, which equals `w(T, ·)` for initial-value problems.
#[derive(Clone, Debug)]
pub struct PreparedProblem {
    pub name: String,
    pub user_problem: PdeProblem,
    /// Terminal-value problem whose FK samples are drawn; for `hjb` this is
    /// the linearized problem for `exp(−v/λ)`.
    pub sampling: PdeProblem,
    pub cole_hopf_lambda: Option<f64>,
}

impl PreparedProblem {
    pub fn dim(&self) -> usize {
        self.sampling.dim()
    }

    /// Closed-form target value at `x`, if one exists.
    pub fn reference(&self, x: &[f64]) -> Option<f64> {
        let t = match self.name.as_str() {
            "heat" | "advdiff" => self.user_problem.horizon(),
            "hjb" => 0.0,
            _ => return None,
        };
        analytic_reference(&self.name, t, x).ok()
    }

    pub fn has_reference(&self) -> bool {
        NAMES.contains(&self.name.as_str())
    }
}

pub fn named_problem(name: &str, dim: usize) -> Result<PreparedProblem> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "dimension must be at least 1".into(),
        ));
    }
    let gaussian: SpatialField = Arc::new(|x| (-RATE * sq_dist_to_center(x)).exp());
    match name {
        "heat" | "advdiff" => {
            let mut p = PdeProblem::new(dim, dim, HORIZON, gaussian, Orientation::InitialValue)?
                .with_diffusion(Diffusion::Isotropic(SIGMA))?;
            if name == "advdiff" {
                p = p.with_drift(Drift::Constant(vec![ADVECTION; dim]))?;
            }
            Ok(PreparedProblem {
                name: name.into(),
                sampling: p.to_terminal_value(),
                user_problem: p,
                cole_hopf_lambda: None,
            })
        }
        "hjb" => {
            let eye = DMatrix::identity(dim, dim);
            let ch = cole_hopf_linearize(
                Arc::new(sq_dist_to_center),
                Arc::new(|_| 0.0),
                &eye,
                &eye,
                &(&eye * SIGMA),
                HORIZON,
            )?;
            Ok(PreparedProblem {
                name: name.into(),
                user_problem: ch.problem.clone(),
                sampling: ch.problem,
                cole_hopf_lambda: Some(ch.lambda),
            })
        }
        other => Err(Error::UnknownProblem(other.into())),
    }
}

/// Closed-form solutions of the built-in problems at dimension `x.len()`.
///
/// `heat` and `advdiff` return `w(t, x)` of the initial-value problem;
/// `hjb` returns the value function `v(t, x)` of the terminal-value problem,
/// from the scalar Riccati equation `P' = 2P² − 1`, `P(T) = 0`:
/// `v = P(t)‖x−c‖² + d·(σ²/2)·log cosh(√2 (T−t))`, `P(t) = tanh(√2 (T−t))/√2`.
pub fn analytic_reference(name: &str, t: f64, x: &[f64]) -> Result<f64> {
    if !(0.0..=HORIZON).contains(&t) {
        return Err(Error::OutOfDomain {
            value: t,
            lo: 0.0,
            hi: HORIZON,
        });
    }
    let d = x.len() as f64;
    let diffusivity = 0.5 * SIGMA * SIGMA;
    let heat = |r2: f64| {
        let spread = 1.0 + 4.0 * RATE * diffusivity * t;
        spread.powf(-0.5 * d) * (-RATE * r2 / spread).exp()
    };
    match name {
        "heat" => Ok(heat(sq_dist_to_center(x))),
        "advdiff" => {
            let shifted: Vec<f64> = x.iter().map(|v| v + ADVECTION * t).collect();
            Ok(heat(sq_dist_to_center(&shifted)))
        }
        "hjb" => {
            let tau = std::f64::consts::SQRT_2 * (HORIZON - t);
            let p = tau.tanh() / std::f64::consts::SQRT_2;
            Ok(p * sq_dist_to_center(x) + d * diffusivity * tau.cosh().ln())
        }
        other => Err(Error::UnknownProblem(other.into())),
    }
}
