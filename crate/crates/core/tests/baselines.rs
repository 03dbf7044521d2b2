use fredholm::baselines::{nystrom_eig, nystrom_invariant, stationarity_residual, NystromGrid, Projection};
use fredholm::problems::{solve_omega_root, ExponentialKernel, GaussianTransitionKernel};

#[test]
fn eigenvalue_converges_under_refinement() {
    let mu = |n| nystrom_eig(&ExponentialKernel, -1.0, 1.0, n).unwrap().eigenvalue;
    let (m125, m250, m500) = (mu(125), mu(250), mu(500));
    assert!((m500 - m250).abs() < (m250 - m125).abs(), "{m125} {m250} {m500}");
    let omega = solve_omega_root(1e-12);
    assert!((m500 - 2.0 / (1.0 + omega * omega)).abs() < 1e-2);
}

#[test]
fn eigen_residual_is_small() {
    for n in [50, 200] {
        let sol = nystrom_eig(&ExponentialKernel, -1.0, 1.0, n).unwrap();
        assert!(sol.residual < 1e-8, "{}", sol.residual);
        let mass: f64 = sol.eigenfunction.iter().sum::<f64>() * sol.grid.weight();
        assert!((mass - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ou_invariant_is_a_fixed_point() {
    let k = GaussianTransitionKernel::new(0.5);
    let (lo, hi, n) = (-8.0, 8.0, 500);
    let p = nystrom_invariant(&k, lo, hi, n, Projection::default()).unwrap();
    let nodes = NystromGrid::new(lo, hi, n).unwrap();
    assert!(stationarity_residual(&k, &nodes, p.values()) <= 1e-3);
    assert!(p.values().iter().all(|&v| v >= 0.0));
    assert!((p.variance() - 1.0).abs() < 1e-2);
}
