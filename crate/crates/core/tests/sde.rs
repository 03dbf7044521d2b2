mod common;

use std::sync::Arc;

use fredholm::problems::{gaussian_toy_problem, ConstantForcing, ConstantKernel};
use fredholm::sde::{euler_step_with_noise, init_cloud, run, InitSpec, NoiseSource};
use fredholm::{FredholmProblem, ParticleCloud, ReferenceMeasure, Regularization, SimConfig};

fn flat() -> FredholmProblem {
    FredholmProblem::new(Arc::new(ConstantKernel(1.0)), Arc::new(ConstantForcing(1.0)), 0.5, 1).unwrap()
}

#[test]
fn pure_diffusion_variance_grows_linearly() {
    // Zero drift leaves particles independent, so 400 clouds of 250 pool
    // into 10⁵ draws of the same law at a fraction of the pairwise cost.
    let (gamma, steps, var0) = (0.01, 20, 1.0);
    let reg = Regularization::new(0.0, 0.0, ReferenceMeasure::Flat);
    let mut all = Vec::with_capacity(100_000);
    for seed in 0..400 {
        let config = SimConfig::new(250, gamma, steps, seed, InitSpec::Gaussian { mean: 0.0, var: var0 });
        all.extend_from_slice(run(&flat(), &reg, &config).unwrap().cloud.positions());
    }
    let n = all.len() as f64;
    let m = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = var0 + 2.0 * gamma * steps as f64;
    assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
}

#[test]
fn trajectories_are_exchangeable() {
    let p = gaussian_toy_problem(0.5, 0.5).unwrap();
    let reg = Regularization::new(0.1, 0.0, ReferenceMeasure::standard_normal());
    let perm = [2usize, 0, 3, 1];
    let mut a = ParticleCloud::from_positions(vec![-1.0, 0.3, 0.8, 2.0], 1).unwrap();
    let mut b = ParticleCloud::from_positions(perm.iter().map(|&i| a.positions()[i]).collect(), 1).unwrap();
    let noise = NoiseSource::new(5);
    for step in 1..=10 {
        let z = noise.draw(step, 4, 1);
        let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        a = euler_step_with_noise(&a, &p, &reg, 0.01, &z).unwrap();
        b = euler_step_with_noise(&b, &p, &reg, 0.01, &zp).unwrap();
    }
    for (new, &old) in perm.iter().enumerate() {
        assert!((b.positions()[new] - a.positions()[old]).abs() < 1e-12);
    }
}

#[test]
fn runs_do_not_depend_on_worker_count() {
    let p = gaussian_toy_problem(0.5, 0.5).unwrap();
    let reg = Regularization::new(0.01, 0.0, ReferenceMeasure::standard_normal());
    let config = SimConfig::new(200, 0.01, 30, 3, InitSpec::Gaussian { mean: 0.0, var: 0.01 });
    let one = fredholm::with_threads(1, || run(&p, &reg, &config).unwrap().cloud);
    let four = fredholm::with_threads(4, || run(&p, &reg, &config).unwrap().cloud);
    assert_eq!(one, four);
}

#[test]
fn zero_horizon_is_the_initial_draw() {
    let p = gaussian_toy_problem(0.5, 0.5).unwrap();
    let reg = Regularization::new(0.01, 0.0, ReferenceMeasure::standard_normal());
    let config = SimConfig::new(50, 0.01, 0, 9, InitSpec::Uniform { lower: -1.0, upper: 1.0 });
    let out = run(&p, &reg, &config).unwrap();
    assert_eq!(out.cloud, init_cloud(&config, 1).unwrap());
}

// At T = 1 the variance gap only shrinks by about e^{-1.5}, so the check
// starts on the solution and asserts the cloud stays there.
#[test]
fn toy_cloud_settles_on_the_standard_normal() {
    let p = gaussian_toy_problem(0.5, 0.5).unwrap();
    let reg = Regularization::new(0.1, 0.0, ReferenceMeasure::standard_normal());
    let (mut mean, mut var) = (0.0, 0.0);
    for seed in 0..5 {
        let config = SimConfig::new(500, 1e-3, 1000, seed, InitSpec::Gaussian { mean: 0.0, var: 1.0 });
        let cloud = run(&p, &reg, &config).unwrap().cloud;
        mean += cloud.mean()[0] / 5.0;
        var += cloud.variance()[0] / 5.0;
    }
    assert!(mean.abs() < 0.1, "mean {mean}");
    assert!((var - 1.0).abs() < 0.15, "variance {var}");
}
