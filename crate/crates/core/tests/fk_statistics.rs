use std::sync::Arc;

use fkgp::pde::{Diffusion, Orientation, PdeProblem, Scalar};
use fkgp::problems::{analytic_reference, named_problem};
use fkgp::sde::{fk_ensemble_at, fk_sample, FkConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn brownian(dim: usize, sigma: f64, terminal: fn(&[f64]) -> f64) -> PdeProblem {
    PdeProblem::new(
        dim,
        dim,
        1.0,
        Arc::new(terminal),
        Orientation::TerminalValue,
    )
    .unwrap()
    .with_diffusion(Diffusion::Isotropic(sigma))
    .unwrap()
}

#[test]
fn heat_samples_are_unbiased() {
    let p = named_problem("heat", 10).unwrap();
    let x = vec![0.5; 10];
    let m = 20_000;
    let ens = fk_ensemble_at(&p.sampling, &[x.clone()], &FkConfig::new(m, 3)).unwrap();
    let truth = analytic_reference("heat", 1.0, &x).unwrap();
    let se = (ens.variance[0] / m as f64).sqrt();
    assert!(
        (ens.mean[0] - truth).abs() < 4.0 * se,
        "{} vs {truth} (se {se})",
        ens.mean[0]
    );
}

#[test]
fn linear_terminal_is_a_martingale() {
    // g(x) = x₁ under pure diffusion: mean x₁, variance σ²T.
    let p = brownian(3, 0.4, |x| x[0]);
    let m = 20_000;
    let ens = fk_ensemble_at(&p, &[vec![0.3, 0.0, 0.0]], &FkConfig::new(m, 7)).unwrap();
    let se = (ens.variance[0] / m as f64).sqrt();
    assert!((ens.mean[0] - 0.3).abs() < 4.0 * se);
    // Var of the sample variance for Gaussian data is 2σ⁴/(M−1).
    let sd_var = (2.0 * 0.16f64.powi(2) / (m - 1) as f64).sqrt();
    assert!((ens.variance[0] - 0.16).abs() < 4.0 * sd_var);
}

#[test]
fn quadratic_terminal_mean() {
    // E‖x + σW_T‖² = ‖x‖² + dσ²T.
    let p = brownian(4, 0.4, |x| x.iter().map(|v| v * v).sum());
    let m = 20_000;
    let x = vec![0.5, -0.2, 0.1, 0.0];
    let ens = fk_ensemble_at(&p, &[x.clone()], &FkConfig::new(m, 11)).unwrap();
    let truth = 0.25 + 0.04 + 0.01 + 4.0 * 0.16;
    let se = (ens.variance[0] / m as f64).sqrt();
    assert!((ens.mean[0] - truth).abs() < 4.0 * se);
}

fn discount_error(steps: usize) -> f64 {
    let p = PdeProblem::new(1, 1, 1.0, Arc::new(|_| 1.0), Orientation::TerminalValue)
        .unwrap()
        .with_reaction(Scalar::Constant(1.0))
        .with_source(Scalar::Constant(1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // v = ∫₀¹ e^{−s} ds + e^{−1} = 1.
    (fk_sample(&p, &[0.0], 0.0, steps, &mut rng).unwrap() - 1.0).abs()
}

#[test]
fn source_quadrature_is_second_order() {
    let ks = [10, 20, 40, 80];
    let errs: Vec<f64> = ks.iter().map(|k| discount_error(*k)).collect();
    let lx: Vec<f64> = ks.iter().map(|k| (*k as f64).ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 4.0;
    let my = ly.iter().sum::<f64>() / 4.0;
    let slope = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 2.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn constant_discount_is_exact() {
    let p = PdeProblem::new(2, 2, 1.0, Arc::new(|_| 1.0), Orientation::TerminalValue)
        .unwrap()
        .with_reaction(Scalar::Constant(1.0));
    for k in [1, 10, 100] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = fk_sample(&p, &[0.1, 0.2], 0.0, k, &mut rng).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }
}
