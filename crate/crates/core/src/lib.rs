//! Mesh-free solver for Kolmogorov PDEs: Feynman-Kac Monte Carlo samples
//! smoothed by heteroscedastic Gaussian process regression, with posterior
//! variance diagnostics and spectral lower bounds on the integrated MSE.

pub mod baselines;
pub mod bench;
pub mod bessel;
pub mod error;
pub mod gpr;
pub mod hyperopt;
pub mod kernel;
pub mod linalg;
pub mod pde;
pub mod problems;
pub mod rng;
pub mod sde;
pub mod uncertainty;

pub use error::{Error, Result};
