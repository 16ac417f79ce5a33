use fkgp::bench::slice_domain;
use fkgp::bench::{run_experiment, write_jsonl, ExperimentConfig, Method};
use fkgp::hyperopt::{optimize_hyperparameters, HyperOptions, NoiseFit};
use fkgp::problems::{named_problem, ProblemSpec};
use fkgp::sde::{fk_ensemble, FkConfig};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ProblemSpec::Named("advdiff".into()));
    c.dim = 4;
    c.methods = Method::ALL.to_vec();
    c.m_list = vec![40, 80];
    c.n_list = vec![6];
    c.seeds = vec![0, 1, 2];
    c.restarts = 4;
    c.fk.time_steps = Some(20);
    c.quad_points = 201;
    c.imse_quad_points = 50;
    c.eigen_samples = 40;
    c
}

#[test]
fn ensembles_ignore_thread_count() {
    let p = named_problem("heat", 10).unwrap();
    let dom = slice_domain(10, 8).unwrap();
    let cfg = FkConfig::new(300, 42);
    let one = in_pool(1, || fk_ensemble(&p.sampling, &dom, &cfg).unwrap());
    let four = in_pool(4, || fk_ensemble(&p.sampling, &dom, &cfg).unwrap());
    assert_eq!(one, four);
    let again = fk_ensemble(&p.sampling, &dom, &cfg).unwrap();
    assert_eq!(one, again);
}

#[test]
fn hyperparameters_ignore_thread_count() {
    let p = named_problem("heat", 10).unwrap();
    let dom = slice_domain(10, 8).unwrap();
    let ens = fk_ensemble(&p.sampling, &dom, &FkConfig::new(100, 1)).unwrap();
    let opts = HyperOptions {
        restarts: 8,
        seed: 9,
        ..Default::default()
    };
    let run = || {
        optimize_hyperparameters(&ens.points, &ens.mean, &NoiseFit::Homoscedastic, &opts).unwrap()
    };
    assert_eq!(in_pool(1, run), in_pool(3, run));
}

#[test]
fn sweep_output_ignores_thread_count() {
    let c = small_config();
    let render = |threads| {
        in_pool(threads, || {
            let recs = run_experiment(&c).unwrap();
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &c, &recs).unwrap();
            buf
        })
    };
    let a = render(1);
    assert_eq!(a, render(4));
    assert_eq!(a, render(1));
}
