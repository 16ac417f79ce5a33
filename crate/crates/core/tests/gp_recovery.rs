use fkgp::gpr::NoiseModel;
use fkgp::hyperopt::{optimize_hyperparameters, HyperOptions, NoiseFit};
use fkgp::kernel::{gram_matrix, KernelSpec};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Draws one function from the GP prior plus heteroscedastic noise.
fn draw(spec: &KernelSpec, pts: &[Vec<f64>], noise: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = gram_matrix(spec, pts);
    for i in 0..pts.len() {
        k[(i, i)] += noise[i] + 1e-10;
    }
    let l = k.cholesky().unwrap().l();
    let z = DVector::from_iterator(
        pts.len(),
        (0..pts.len()).map(|_| StandardNormal.sample(&mut rng)),
    );
    (l * z).iter().copied().collect()
}

#[test]
fn recovers_prior_hyperparameters() {
    let truth = KernelSpec::new(1.5, 0.2, 1.0).unwrap();
    let n = 40;
    let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
    let noise: Vec<f64> = (0..n).map(|i| 1e-3 * (1.0 + (i % 3) as f64)).collect();
    let opts = HyperOptions {
        restarts: 5,
        ..Default::default()
    };
    let mut log_h = Vec::new();
    let mut log_a = Vec::new();
    for seed in 0..6 {
        let y = draw(&truth, &pts, &noise, seed);
        let model = NoiseFit::Fixed(NoiseModel::Heteroscedastic {
            variances: noise.clone(),
            sample_size: 1,
        });
        let fit =
            optimize_hyperparameters(&pts, &y, &model, &HyperOptions { seed, ..opts }).unwrap();
        log_h.push(fit.spec.length_scale.ln());
        log_a.push(fit.spec.amplitude.ln());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    // Geometric means within a factor 2 of the truth.
    assert!(
        (mean(&log_h) - 0.2f64.ln()).abs() < 2f64.ln(),
        "h {}",
        mean(&log_h).exp()
    );
    assert!(
        mean(&log_a).abs() < 2f64.ln(),
        "amplitude {}",
        mean(&log_a).exp()
    );
}

#[test]
fn recovers_homoscedastic_noise_level() {
    let truth = KernelSpec::new(1.5, 0.3, 1.0).unwrap();
    let n = 50;
    let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
    let noise = vec![0.01; n];
    let mut log_s = Vec::new();
    for seed in 0..6 {
        let y = draw(&truth, &pts, &noise, 100 + seed);
        let opts = HyperOptions {
            restarts: 5,
            seed,
            ..Default::default()
        };
        let fit = optimize_hyperparameters(&pts, &y, &NoiseFit::Homoscedastic, &opts).unwrap();
        log_s.push(fit.noise_variance.unwrap().ln());
    }
    let g = (log_s.iter().sum::<f64>() / log_s.len() as f64).exp();
    assert!(g > 0.005 && g < 0.02, "noise {g}");
}
