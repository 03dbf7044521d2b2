mod common;

use std::sync::Arc;

use common::{normal_cloud, random_cloud, rng};
use fredholm::metrics::ise;
use fredholm::problems::{gaussian_toy_problem, normal_pdf, GaussianForcing, GaussianTransitionKernel};
use fredholm::reconstruct::{estimate_functional, kde_density, plug_in_density, silverman_bandwidth};
use fredholm::{FredholmProblem, GridDensity, GridSpec, ReferenceMeasure, Regularization};

fn exact(grid: &GridSpec) -> GridDensity {
    GridDensity::from_fn(grid, |x| normal_pdf(x, 0.0, 1.0))
}

#[test]
fn plug_in_recovers_the_toy_solution() {
    let p = gaussian_toy_problem(0.5, 0.5).unwrap();
    let grid = GridSpec::toy_default();
    let cloud = normal_cloud(&mut rng(21), 100_000);
    let e = ise(&plug_in_density(&cloud, &p, &grid).unwrap(), &exact(&grid)).unwrap();
    assert!(e < 1e-3, "ise {e:e}");
}

#[test]
fn kde_of_exact_samples() {
    let grid = GridSpec::toy_default();
    let cloud = normal_cloud(&mut rng(22), 10_000);
    let kde = kde_density(&cloud, &grid, None).unwrap();
    let e = ise(&kde, &exact(&grid)).unwrap();
    assert!(e < 5e-3, "ise {e:e}");
}

#[test]
fn kde_has_unit_mass() {
    for seed in 0..5 {
        let cloud = random_cloud(&mut rng(seed), 300, 1);
        let h = silverman_bandwidth(cloud.positions());
        let (lo, hi) = cloud
            .positions()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let grid = GridSpec::new(lo - 6.0 * h, hi + 6.0 * h, 4001).unwrap();
        let mass = kde_density(&cloud, &grid, None).unwrap().integral();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }
}

#[test]
fn functional_vanishes_at_the_solution() {
    let p = gaussian_toy_problem(0.5, 0.5).unwrap();
    let reg = Regularization::new(0.1, 0.0, ReferenceMeasure::standard_normal());
    let cloud = normal_cloud(&mut rng(23), 10_000);
    let f = estimate_functional(&cloud, &p, &reg, &GridSpec::toy_default()).unwrap();
    assert!(f.kl_data.abs() < 0.02, "{f:?}");
    assert!(f.kl_reg.abs() < 0.02, "{f:?}");
}

#[test]
fn data_term_is_not_materially_negative() {
    let p = gaussian_toy_problem(0.5, 0.5).unwrap();
    let reg = Regularization::new(0.0, 0.0, ReferenceMeasure::Flat);
    let mut r = rng(24);
    for _ in 0..5 {
        let cloud = random_cloud(&mut r, 1000, 1);
        let f = estimate_functional(&cloud, &p, &reg, &GridSpec::toy_default()).unwrap();
        assert!(f.kl_data >= -0.05, "{f:?}");
    }
}

#[test]
fn plug_in_is_affine_in_lambda() {
    let forcing = Arc::new(GaussianForcing {
        weight: 0.5,
        mean: 0.0,
        var: 1.0,
    });
    let at = |lambda| {
        FredholmProblem::new(Arc::new(GaussianTransitionKernel::new(0.5)), forcing.clone(), lambda, 1).unwrap()
    };
    let grid = GridSpec::new(-6.0, 6.0, 241).unwrap();
    let cloud = random_cloud(&mut rng(25), 200, 1);
    let phi = plug_in_density(&cloud, &at(0.0), &grid).unwrap();
    let one = plug_in_density(&cloud, &at(0.2), &grid).unwrap();
    let two = plug_in_density(&cloud, &at(0.7), &grid).unwrap();
    for ((f, a), b) in phi.values().iter().zip(one.values()).zip(two.values()) {
        assert!(((a - f) / 0.2 - (b - f) / 0.7).abs() < 1e-13);
    }
}

#[test]
fn doubling_the_grid_barely_moves_the_estimates() {
    let p = gaussian_toy_problem(0.5, 0.5).unwrap();
    let reg = Regularization::new(0.1, 0.0, ReferenceMeasure::standard_normal());
    let cloud = normal_cloud(&mut rng(26), 2000);
    let coarse = GridSpec::toy_default();
    let fine = coarse.refined();
    let e_c = ise(&plug_in_density(&cloud, &p, &coarse).unwrap(), &exact(&coarse)).unwrap();
    let e_f = ise(&plug_in_density(&cloud, &p, &fine).unwrap(), &exact(&fine)).unwrap();
    assert!((e_c - e_f).abs() < 1e-4);
    let f_c = estimate_functional(&cloud, &p, &reg, &coarse).unwrap();
    let f_f = estimate_functional(&cloud, &p, &reg, &fine).unwrap();
    assert!((f_c.kl_data - f_f.kl_data).abs() < 1e-4);
    assert!((f_c.kl_reg - f_f.kl_reg).abs() < 1e-4);
}
