//! Integral kernels `k(x, y)` and forcing terms `φ(x)` with their gradients.
//!
//! Points are plain coordinate slices so one kernel instance serves every
//! dimension. Gradients are written into caller-provided buffers of the same
//! length as the inputs.

use std::f64::consts::PI;
use std::fmt::Debug;

/// A nonnegative integral kernel with access to both partial gradients.
pub trait Kernel: Debug + Send + Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// Gradient with respect to the first argument.
    fn grad1(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    /// Gradient with respect to the second argument.
    fn grad2(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    fn describe(&self) -> String;
}

/// A nonnegative forcing term with its gradient.
pub trait Forcing: Debug + Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64], out: &mut [f64]);

    /// True when the forcing vanishes everywhere (homogeneous equation).
    fn is_zero(&self) -> bool {
        false
    }

    fn describe(&self) -> String;
}

/// Density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    (-0.5 * r * r / var).exp() / (2.0 * PI * var).sqrt()
}

/// Gaussian autoregressive transition `k(x, y) = Π N(x_i; a y_i, s)` with
/// `a = e^{-β}` and `s = 1 - e^{-2β}`: the density of the next state `x`
/// given the current state `y`, as for the GP-SSM kernel.
///
/// With this orientation `∫ k(x, y) N(y; 0, I) dy = N(x; 0, I)`, so the
/// standard normal solves the toy equation. The other orientation maps it
/// to a normal with variance `(2 - a²)/a²` instead.
#[derive(Debug, Clone)]
pub struct GaussianTransitionKernel {
    beta: f64,
    decay: f64,
    var: f64,
}

impl GaussianTransitionKernel {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            decay: (-beta).exp(),
            var: -(-2.0 * beta).exp_m1(),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn variance(&self) -> f64 {
        self.var
    }
}

impl Kernel for GaussianTransitionKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| normal_pdf(xi, self.decay * yi, self.var))
            .product()
    }

    fn grad1(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let k = self.eval(x, y);
        for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
            *o = -k * (xi - self.decay * yi) / self.var;
        }
    }

    fn grad2(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let k = self.eval(x, y);
        for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
            *o = k * self.decay * (xi - self.decay * yi) / self.var;
        }
    }

    fn describe(&self) -> String {
        format!("gaussian-transition(beta={})", self.beta)
    }
}

/// `k(x, y) = exp(-‖y - x‖)`.
///
/// Not differentiable on the diagonal; gradients use the one-sided
/// derivative away from it and are set to zero at `y = x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialKernel;

impl ExponentialKernel {
    fn radius(x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }
}

impl Kernel for ExponentialKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (-Self::radius(x, y)).exp()
    }

    fn grad1(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let r = Self::radius(x, y);
        if r == 0.0 {
            out.fill(0.0);
            return;
        }
        let k = (-r).exp();
        for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
            *o = k * (yi - xi) / r;
        }
    }

    fn grad2(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let r = Self::radius(x, y);
        if r == 0.0 {
            out.fill(0.0);
            return;
        }
        let k = (-r).exp();
        for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
            *o = -k * (yi - xi) / r;
        }
    }

    fn describe(&self) -> String {
        "exponential".to_string()
    }
}

/// `k(x, y) = exp(-‖y - x‖²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredExponentialKernel;

impl Kernel for SquaredExponentialKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum();
        (-r2).exp()
    }

    fn grad1(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let k = self.eval(x, y);
        for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
            *o = 2.0 * (yi - xi) * k;
        }
    }

    fn grad2(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let k = self.eval(x, y);
        for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
            *o = -2.0 * (yi - xi) * k;
        }
    }

    fn describe(&self) -> String {
        "squared-exponential".to_string()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantKernel(pub f64);

impl Kernel for ConstantKernel {
    fn eval(&self, _x: &[f64], _y: &[f64]) -> f64 {
        self.0
    }

    fn grad1(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn grad2(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn describe(&self) -> String {
        format!("constant({})", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForcing;

impl Forcing for ZeroForcing {
    fn eval(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn grad(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn is_zero(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        "zero".to_string()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantForcing(pub f64);

impl Forcing for ConstantForcing {
    fn eval(&self, _x: &[f64]) -> f64 {
        self.0
    }

    fn grad(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn is_zero(&self) -> bool {
        self.0 == 0.0
    }

    fn describe(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// `φ(x) = w · Π N(x_i; m, v)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianForcing {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

impl Forcing for GaussianForcing {
    fn eval(&self, x: &[f64]) -> f64 {
        self.weight
            * x.iter()
                .map(|&xi| normal_pdf(xi, self.mean, self.var))
                .product::<f64>()
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) {
        let f = self.eval(x);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = -f * (xi - self.mean) / self.var;
        }
    }

    fn is_zero(&self) -> bool {
        self.weight == 0.0
    }

    fn describe(&self) -> String {
        format!(
            "gaussian(weight={}, mean={}, var={})",
            self.weight, self.mean, self.var
        )
    }
}

/// Central-difference gradient of a scalar map, step `h` per coordinate.
pub(crate) fn central_difference(
    f: impl Fn(&[f64]) -> f64,
    at: &[f64],
    h: f64,
    out: &mut [f64],
) {
    let mut probe = at.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        probe[i] = at[i] + h;
        let up = f(&probe);
        probe[i] = at[i] - h;
        let down = f(&probe);
        probe[i] = at[i];
        *o = (up - down) / (2.0 * h);
    }
}
