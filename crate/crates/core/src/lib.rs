//! Particle solver for Fredholm integral equations of the second kind
//!
//! ```text
//! π(x) = φ(x) + λ ∫ k(x, y) π(y) dy
//! ```
//!
//! whose solution is a probability density. The equation is recast as the
//! minimization of `KL(π ‖ φ + λKπ + η) + α KL(π ‖ π₀)` over probability
//! measures, and the Wasserstein gradient flow of that objective is
//! simulated with an interacting particle system discretized by
//! Euler–Maruyama.
//!
//! * [`problems`]: kernels, forcings, reference measures, analytic references
//! * [`drift`]: the `O(N²)` mean-field drift
//! * [`sde`]: the particle scheme, its run loop and step-budget planning
//! * [`reconstruct`]: plug-in and KDE densities, objective estimates
//! * [`baselines`]: Nyström eigen- and invariant-density solvers
//! * [`metrics`]: ISE, W1, moment errors, rate fits

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod drift;
mod error;
pub mod metrics;
pub mod problems;
pub mod reconstruct;
pub mod sde;

pub use error::{Error, Result};
pub use problems::{FredholmProblem, Kernel, Forcing, ReferenceMeasure, Regularization};
pub use reconstruct::{GridDensity, GridSpec};
pub use sde::{ParticleCloud, SimConfig};

/// Runs `f` on a dedicated pool of `threads` workers (`0` = rayon default).
///
/// Results are identical for every worker count.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
