//! Mean-field drift of the particle system.
//!
//! For the empirical measure `π^N` of the cloud the drift at `x` is
//!
//! ```text
//! b(x) = (1/N) Σ_z λ ∇₂k(z, x) / D(z)  +  (λ (1/N) Σ_z ∇₁k(x, z) + ∇φ(x)) / D(x)  −  α ∇U(x)
//! ```
//!
//! with `D(y) = λ π^N[k(y, ·)] + φ(y) + η`. Precomputing `D` on the cloud
//! makes one evaluation for all particles cost `O(N² d)` instead of `O(N³ d)`.
//!
//! Every output element is a sequential sum in ascending particle order, so
//! results do not depend on how the outer loop is split across threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problems::{FredholmProblem, Regularization};
use crate::sde::ParticleCloud;

/// Rows per rayon task; keeps tiny clouds on one thread.
const MIN_ROWS_PER_TASK: usize = 16;

/// Drift denominators `λ π^N[k(X^j, ·)] + φ(X^j) + η`, one per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftScratch {
    denom: Vec<f64>,
}

impl DriftScratch {
    pub fn denominators(&self) -> &[f64] {
        &self.denom
    }
}

/// Computes every drift denominator with an exact double loop.
pub fn pairwise_denominators(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    eta: f64,
) -> Result<DriftScratch> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("particle cloud"));
    }
    if !(eta >= 0.0) {
        return Err(Error::invalid(format!("eta must be nonnegative, got {eta}")));
    }
    let n = cloud.len();
    let inv_n = 1.0 / n as f64;
    let kernel = problem.kernel.as_ref();
    let forcing = problem.forcing.as_ref();
    let lambda = problem.lambda;

    let denom: Vec<f64> = (0..n)
        .into_par_iter()
        .with_min_len(MIN_ROWS_PER_TASK)
        .map(|j| {
            let xj = cloud.particle(j);
            let mut acc = 0.0;
            for xi in cloud.iter() {
                acc += kernel.eval(xj, xi);
            }
            lambda * acc * inv_n + forcing.eval(xj) + eta
        })
        .collect();

    if let Some((particle, &value)) = denom
        .iter()
        .enumerate()
        .find(|(_, d)| !(**d > 0.0 && d.is_finite()))
    {
        return Err(Error::VanishingDenominator {
            step: cloud.step_index(),
            particle,
            value,
        });
    }
    Ok(DriftScratch { denom })
}

/// The two-point drift
/// `b^η(x, z) = λ ∇₂k(z, x) / D(z) + (λ ∇₁k(x, z) + ∇φ(x)) / D(x)`.
pub fn b_eta(
    x: &[f64],
    z: &[f64],
    denom_x: f64,
    denom_z: f64,
    problem: &FredholmProblem,
    out: &mut [f64],
) {
    let d = x.len();
    let mut g2 = vec![0.0; d];
    let mut g1 = vec![0.0; d];
    let mut gphi = vec![0.0; d];
    problem.kernel.grad2(z, x, &mut g2);
    problem.kernel.grad1(x, z, &mut g1);
    problem.forcing.grad(x, &mut gphi);
    let lambda = problem.lambda;
    for i in 0..d {
        out[i] = lambda * g2[i] / denom_z + (lambda * g1[i] + gphi[i]) / denom_x;
    }
}

/// Drift of every particle against the cloud's empirical measure, flattened
/// as `N × d` row-major.
pub fn drift_all(
    cloud: &ParticleCloud,
    scratch: &DriftScratch,
    problem: &FredholmProblem,
    reg: &Regularization,
) -> Result<Vec<f64>> {
    let n = cloud.len();
    let d = cloud.dim();
    if scratch.denom.len() != n {
        return Err(Error::invalid(format!(
            "scratch holds {} denominators for a cloud of {n}",
            scratch.denom.len()
        )));
    }
    let inv_n = 1.0 / n as f64;
    let lambda = problem.lambda;
    let kernel = problem.kernel.as_ref();
    let denom = &scratch.denom;

    let mut out = vec![0.0; n * d];
    out.par_chunks_mut(d)
        .with_min_len(MIN_ROWS_PER_TASK)
        .enumerate()
        .for_each(|(l, row)| {
            let x = cloud.particle(l);
            let mut g = vec![0.0; d];
            let mut interaction = vec![0.0; d];
            let mut self_grad = vec![0.0; d];
            for (z, xz) in cloud.iter().enumerate() {
                kernel.grad2(xz, x, &mut g);
                let w = 1.0 / denom[z];
                for i in 0..d {
                    interaction[i] += g[i] * w;
                }
                kernel.grad1(x, xz, &mut g);
                for i in 0..d {
                    self_grad[i] += g[i];
                }
            }
            let mut gphi = vec![0.0; d];
            problem.forcing.grad(x, &mut gphi);
            let mut gu = vec![0.0; d];
            reg.reference.grad_potential(x, &mut gu);
            for i in 0..d {
                row[i] = lambda * interaction[i] * inv_n
                    + (lambda * self_grad[i] * inv_n + gphi[i]) / denom[l]
                    - reg.alpha * gu[i];
            }
        });
    Ok(out)
}
