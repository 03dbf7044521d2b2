//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use fredholm::problems::{GaussianForcing, SquaredExponentialKernel};
use fredholm::{FredholmProblem, ParticleCloud, Regularization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ParticleCloud {
    let pos = (0..n * d).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    ParticleCloud::from_positions(pos, d).unwrap()
}

pub fn normal_cloud(rng: &mut ChaCha8Rng, n: usize) -> ParticleCloud {
    let pos = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    ParticleCloud::from_positions(pos, 1).unwrap()
}

/// Squared-exponential kernel with a Gaussian forcing, any dimension.
pub fn sq_exp_problem(lambda: f64, d: usize) -> FredholmProblem {
    FredholmProblem::new(
        Arc::new(SquaredExponentialKernel),
        Arc::new(GaussianForcing {
            weight: 0.5,
            mean: 0.3,
            var: 1.2,
        }),
        lambda,
        d,
    )
    .unwrap()
}

/// Drift of particle `l` straight from the definition, with every
/// denominator recomputed on the spot.
pub fn naive_drift(cloud: &ParticleCloud, p: &FredholmProblem, reg: &Regularization, l: usize) -> Vec<f64> {
    let n = cloud.len();
    let d = cloud.dim();
    let denom = |y: &[f64]| {
        let s: f64 = (0..n).map(|i| p.kernel.eval(y, cloud.particle(i))).sum();
        p.lambda * s / n as f64 + p.forcing.eval(y) + reg.eta
    };
    let x = cloud.particle(l);
    let mut out = vec![0.0; d];
    let mut g = vec![0.0; d];
    for z in 0..n {
        p.kernel.grad2(cloud.particle(z), x, &mut g);
        let dz = denom(cloud.particle(z));
        for i in 0..d {
            out[i] += p.lambda * g[i] / dz / n as f64;
        }
    }
    let dx = denom(x);
    for z in 0..n {
        p.kernel.grad1(x, cloud.particle(z), &mut g);
        for i in 0..d {
            out[i] += p.lambda * g[i] / n as f64 / dx;
        }
    }
    p.forcing.grad(x, &mut g);
    for i in 0..d {
        out[i] += g[i] / dx;
    }
    reg.reference.grad_potential(x, &mut g);
    for i in 0..d {
        out[i] -= reg.alpha * g[i];
    }
    out
}

/// Central differences of a scalar function.
pub fn central(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut p = at.to_vec();
    (0..at.len())
        .map(|i| {
            p[i] = at[i] + h;
            let up = f(&p);
            p[i] = at[i] - h;
            let down = f(&p);
            p[i] = at[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_err(analytic: &[f64], fd: &[f64], floor: f64) -> f64 {
    let diff: f64 = analytic.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

pub fn uniform_point(rng: &mut ChaCha8Rng, d: usize, half_width: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-half_width..half_width)).collect()
}
