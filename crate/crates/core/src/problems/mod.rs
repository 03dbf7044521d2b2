//! Fredholm problems `π(x) = φ(x) + λ ∫ k(x, y) π(y) dy` and the analytic
//! references used to validate solvers on them.

mod gp;
mod kernels;
mod reference;

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

pub use gp::{
    gp_fit, gp_predictive_kernel, ssm_transition, GpModel, GradientMode, Predictive,
    PredictiveKernel, TrainingData, FD_STEP, VARIANCE_FLOOR,
};
pub use kernels::{
    normal_pdf, ConstantForcing, ConstantKernel, ExponentialKernel, Forcing,
    GaussianForcing, GaussianTransitionKernel, Kernel, SquaredExponentialKernel, ZeroForcing,
};
pub use reference::{ReferenceMeasure, Regularization};

use crate::error::{Error, Result};
use crate::reconstruct::{GridDensity, GridSpec};

/// Kernel, forcing, coefficient `λ` and dimension of one equation.
#[derive(Debug, Clone)]
pub struct FredholmProblem {
    pub kernel: Arc<dyn Kernel>,
    pub forcing: Arc<dyn Forcing>,
    pub lambda: f64,
    pub dim: usize,
}

impl FredholmProblem {
    pub fn new(
        kernel: Arc<dyn Kernel>,
        forcing: Arc<dyn Forcing>,
        lambda: f64,
        dim: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite, got {lambda}")));
        }
        Ok(Self {
            kernel,
            forcing,
            lambda,
            dim,
        })
    }

    pub fn is_homogeneous(&self) -> bool {
        self.forcing.is_zero()
    }

    pub fn describe(&self) -> String {
        format!(
            "kernel={} forcing={} lambda={} dim={}",
            self.kernel.describe(),
            self.forcing.describe(),
            self.lambda,
            self.dim
        )
    }
}

/// `φ(x) = (1 − λ) N(x; 0, 1)` and the AR(1) transition
/// `k(x, y) = N(x; y e^{-β}, 1 − e^{-2β})`; the unique solution is `N(0, 1)`
/// for every `λ ∈ (0, 1)`.
pub fn gaussian_toy_problem(lambda: f64, beta: f64) -> Result<FredholmProblem> {
    gaussian_toy_problem_in(lambda, beta, 1)
}

/// The product-form generalization of [`gaussian_toy_problem`] to `dim`
/// coordinates; its solution is `N(0, I)`.
pub fn gaussian_toy_problem_in(lambda: f64, beta: f64, dim: usize) -> Result<FredholmProblem> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!(
            "gaussian toy requires lambda in (0, 1), got {lambda}"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!(
            "gaussian toy requires beta > 0, got {beta}"
        )));
    }
    FredholmProblem::new(
        Arc::new(GaussianTransitionKernel::new(beta)),
        Arc::new(GaussianForcing {
            weight: 1.0 - lambda,
            mean: 0.0,
            var: 1.0,
        }),
        lambda,
        dim,
    )
}

/// Bisection for the root of `1 − ω tan ω` in `(0, π/2)`.
///
/// `f` is strictly decreasing there, positive at `0⁺` and unbounded below
/// at `π/2⁻`, so the root is unique and always bracketed.
pub fn solve_omega_root(tol: f64) -> f64 {
    let tol = if tol > 0.0 { tol } else { f64::EPSILON };
    let f = |w: f64| 1.0 - w * w.tan();
    let mut lo = 1e-9;
    let mut hi = FRAC_PI_2 - 1e-9;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Dominant eigenpair of `k(x, y) = exp(-|y − x|)` on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialEigenpair {
    pub omega: f64,
    /// Operator eigenvalue `μ = 2 / (1 + ω²)`.
    pub eigenvalue: f64,
}

impl ExponentialEigenpair {
    pub fn new(omega: f64) -> Self {
        Self {
            omega,
            eigenvalue: 2.0 / (1.0 + omega * omega),
        }
    }

    /// Coefficient for the homogeneous equation: `Kπ = μπ ⇔ π = (1/μ) Kπ`.
    pub fn equation_lambda(&self) -> f64 {
        1.0 / self.eigenvalue
    }

    /// `cos(ωx) / √(1 + sin(2ω)/(2ω))` on `[-1, 1]`, zero outside.
    pub fn eigenfunction(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        let w = self.omega;
        (w * x).cos() / (1.0 + (2.0 * w).sin() / (2.0 * w)).sqrt()
    }

    /// The eigenfunction sampled on `grid` and rescaled to unit trapezoid mass.
    pub fn density_on(&self, grid: &GridSpec) -> GridDensity {
        let mut density = GridDensity::from_fn(grid, |x| self.eigenfunction(x));
        density.normalize();
        density
    }
}

/// The homogeneous exponential-kernel problem on the real line with
/// `λ = 1/μ`, together with its analytic dominant eigenpair.
pub fn exponential_kernel_problem() -> (FredholmProblem, ExponentialEigenpair) {
    let pair = ExponentialEigenpair::new(solve_omega_root(1e-12));
    let problem = FredholmProblem::new(
        Arc::new(ExponentialKernel),
        Arc::new(ZeroForcing),
        pair.equation_lambda(),
        1,
    )
    .expect("eigenvalue is finite");
    (problem, pair)
}

/// Homogeneous problem with `λ = 1` whose kernel is the GP predictive
/// transition density; its solution is the invariant law of the GP-SSM.
pub fn gp_ssm_problem(kernel: Arc<PredictiveKernel>) -> FredholmProblem {
    FredholmProblem::new(kernel, Arc::new(ZeroForcing), 1.0, 1).expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: plain bisection written out separately.
    fn bisect_oracle(tol: f64) -> f64 {
        let (mut a, mut b) = (0.5f64, 1.2f64);
        let f = |w: f64| 1.0 - w * w.tan();
        assert!(f(a) > 0.0 && f(b) < 0.0);
        while b - a > tol {
            let c = 0.5 * (a + b);
            if f(c) > 0.0 {
                a = c
            } else {
                b = c
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn omega_matches_bisection_oracle() {
        let oracle = bisect_oracle(1e-13);
        assert!((oracle - 0.8603335890).abs() < 1e-10);
        let w = solve_omega_root(1e-10);
        assert!((w - oracle).abs() < 1e-10);
        assert!(w > 0.0 && w < FRAC_PI_2);
        assert!((solve_omega_root(1e-3) - 0.86033).abs() <= 1e-3);
    }

    #[test]
    fn omega_function_changes_sign() {
        let f = |w: f64| 1.0 - w * w.tan();
        assert!(f(0.8) > 0.0);
        assert!(f(0.9) < 0.0);
    }

    #[test]
    fn exponential_eigenvalue() {
        let (problem, pair) = exponential_kernel_problem();
        assert!((pair.eigenvalue - 1.1493).abs() < 1e-4);
        assert!((problem.lambda * pair.eigenvalue - 1.0).abs() < 1e-15);
        assert!(problem.is_homogeneous());
    }

    #[test]
    fn toy_values() {
        let p = gaussian_toy_problem(0.5, 0.5).unwrap();
        assert!((p.forcing.eval(&[0.0]) - 0.19947).abs() < 1e-5);
        assert!((p.kernel.eval(&[0.0], &[0.0]) - 0.501776).abs() < 1e-6);
    }

    #[test]
    fn toy_rejects_bad_parameters() {
        for (l, b) in [(0.0, 0.5), (1.0, 0.5), (-0.2, 0.5), (0.5, 0.0), (0.5, -1.0)] {
            assert!(matches!(
                gaussian_toy_problem(l, b),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn toy_kernel_is_density_in_next_state() {
        let p = gaussian_toy_problem(0.5, 0.5).unwrap();
        let grid = GridSpec::new(-10.0, 10.0, 4001).unwrap();
        for y in [-2.0, 0.0, 0.3, 3.5] {
            let d = GridDensity::from_fn(&grid, |x| p.kernel.eval(&[x], &[y]));
            assert!((d.integral() - 1.0).abs() < 1e-6, "y = {y}");
        }
    }

    #[test]
    fn standard_normal_solves_toy_equation() {
        let lambda = 0.7;
        let p = gaussian_toy_problem(lambda, 0.5).unwrap();
        let grid = GridSpec::new(-10.0, 10.0, 4001).unwrap();
        for x in [-2.5, -0.4, 0.0, 1.3] {
            let k_pi = GridDensity::from_fn(&grid, |y| {
                p.kernel.eval(&[x], &[y]) * normal_pdf(y, 0.0, 1.0)
            });
            let rhs = p.forcing.eval(&[x]) + lambda * k_pi.integral();
            assert!((rhs - normal_pdf(x, 0.0, 1.0)).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn eigenfunction_density_is_normalized_and_even() {
        let (_, pair) = exponential_kernel_problem();
        let grid = GridSpec::new(-1.0, 1.0, 801).unwrap();
        let d = pair.density_on(&grid);
        assert!((d.integral() - 1.0).abs() < 1e-12);
        let v = d.values();
        assert!((v[0] - v[800]).abs() < 1e-14);
        assert!(v[400] > v[0]);
    }
}
