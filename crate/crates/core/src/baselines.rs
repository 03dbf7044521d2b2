//! Deterministic Nyström solvers used as comparators.
//!
//! The integral operator is discretized with the midpoint rule on `n` equal
//! cells of `[a, b]`: `A_ij = k(x_i, x_j) Δ`, `Δ = (b − a)/n`. Row `i` indexes
//! the output point, so `(Kπ)(x_i) ≈ (A p)_i`; read as a Markov chain this
//! is `Aᵀ`-stationarity of the row-stochastic transition matrix.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problems::Kernel;
use crate::reconstruct::{GridDensity, GridSpec};

/// Power iteration stops once the relative residual is below this.
pub const EIG_TOLERANCE: f64 = 1e-10;
pub const EIG_MAX_ITERATIONS: usize = 100_000;

/// Row weight of the unit-mass constraint in the invariant-density solve.
pub const CONSTRAINT_WEIGHT: f64 = 1e6;

/// Midpoints of `n` equal cells on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NystromGrid {
    lower: f64,
    upper: f64,
    n: usize,
}

impl NystromGrid {
    pub fn new(lower: f64, upper: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("Nyström needs at least 2 nodes"));
        }
        if !(lower < upper && lower.is_finite() && upper.is_finite()) {
            return Err(Error::invalid(format!(
                "Nyström interval must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper, n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self) -> f64 {
        (self.upper - self.lower) / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.weight()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// The nodes as a uniform [`GridSpec`].
    pub fn as_grid(&self) -> GridSpec {
        GridSpec::new(self.node(0), self.node(self.n - 1), self.n).expect("n >= 2")
    }

    /// Dense `A_ij = k(x_i, x_j) Δ`, row-major.
    pub fn matrix(&self, kernel: &dyn Kernel) -> Vec<f64> {
        let nodes = self.nodes();
        let w = self.weight();
        let n = self.n;
        let mut a = vec![0.0; n * n];
        a.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = kernel.eval(&[nodes[i]], &[nodes[j]]) * w;
            }
        });
        a
    }
}

fn mat_vec(a: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (o, row) in out.iter_mut().zip(a.chunks_exact(n)) {
        *o = row.iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Dominant eigenpair of the discretized operator.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    pub grid: NystromGrid,
    /// Operator eigenvalue `μ`.
    pub eigenvalue: f64,
    /// Values on the nodes with `Σ v_i Δ = 1`.
    pub eigenfunction: Vec<f64>,
    /// `‖A v − μ v‖_∞ / ‖v‖_∞`.
    pub residual: f64,
    pub iterations: usize,
}

impl EigenSolution {
    /// Node values as a density on the node grid.
    pub fn density(&self) -> GridDensity {
        GridDensity::new(self.grid.as_grid(), self.eigenfunction.clone()).expect("sizes match")
    }

    /// Nyström extension `v(x) = (1/μ) Σ_j k(x, x_j) Δ v_j` on `grid`,
    /// renormalized to unit trapezoid mass.
    pub fn interpolate(&self, kernel: &dyn Kernel, grid: &GridSpec) -> GridDensity {
        let nodes = self.grid.nodes();
        let w = self.grid.weight() / self.eigenvalue;
        let mut d = GridDensity::from_fn(grid, |x| {
            nodes
                .iter()
                .zip(&self.eigenfunction)
                .map(|(&xj, &vj)| kernel.eval(&[x], &[xj]) * vj)
                .sum::<f64>()
                * w
        });
        d.normalize();
        d
    }
}

/// Dominant eigenpair of `A_ij = k(x_i, x_j) Δ` by power iteration.
pub fn nystrom_eig(kernel: &dyn Kernel, lower: f64, upper: f64, n: usize) -> Result<EigenSolution> {
    let grid = NystromGrid::new(lower, upper, n)?;
    let a = grid.matrix(kernel);
    let (eigenvalue, mut v, residual, iterations) = power_iteration(&a, n)?;

    let mass: f64 = v.iter().sum::<f64>() * grid.weight();
    if mass != 0.0 {
        v.iter_mut().for_each(|x| *x /= mass);
    }
    let centre = (0..n)
        .min_by(|&i, &j| grid.node(i).abs().total_cmp(&grid.node(j).abs()))
        .expect("n >= 2");
    if v[centre] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(EigenSolution {
        grid,
        eigenvalue,
        eigenfunction: v,
        residual,
        iterations,
    })
}

fn power_iteration(a: &[f64], n: usize) -> Result<(f64, Vec<f64>, f64, usize)> {
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=EIG_MAX_ITERATIONS {
        mat_vec(a, &v, &mut av);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let mu = v.iter().zip(&av).map(|(x, y)| x * y).sum::<f64>() / vv;
        let r: Vec<f64> = av.iter().zip(&v).map(|(y, x)| y - mu * x).collect();
        residual = sup_norm(&r) / sup_norm(&v);
        if residual <= EIG_TOLERANCE {
            return Ok((mu, v, residual, it));
        }
        let scale = sup_norm(&av);
        if scale == 0.0 || !scale.is_finite() {
            break;
        }
        v.iter_mut().zip(&av).for_each(|(x, y)| *x = y / scale);
    }
    Err(Error::NonConvergence {
        iterations: EIG_MAX_ITERATIONS,
        residual,
    })
}

/// How negative entries of the least-squares solution are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projection {
    /// Clamp, renormalize, and re-solve once on the clamped support.
    #[default]
    Resolve,
    /// Clamp and renormalize only.
    Plain,
}

/// Invariant density of a transition kernel `k(x, y)` (density in `x` for
/// each current state `y`) by least squares on `(A − I) p = 0` with a
/// heavily weighted unit-mass row, followed by a nonnegativity projection.
pub fn nystrom_invariant(
    kernel: &dyn Kernel,
    lower: f64,
    upper: f64,
    n: usize,
    projection: Projection,
) -> Result<GridDensity> {
    let grid = NystromGrid::new(lower, upper, n)?;
    let a = grid.matrix(kernel);
    let w = grid.weight();

    let support: Vec<usize> = (0..n).collect();
    let mut p = constrained_solve(&a, n, w, &support)?;
    clamp_and_normalize(&mut p, w)?;

    if projection == Projection::Resolve {
        let support: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
        let q = constrained_solve(&a, n, w, &support)?;
        p = vec![0.0; n];
        for (&i, &qi) in support.iter().zip(&q) {
            p[i] = qi;
        }
        clamp_and_normalize(&mut p, w)?;
    }
    GridDensity::new(grid.as_grid(), p)
}

/// Least squares over the columns in `support`; returns the support values.
fn constrained_solve(a: &[f64], n: usize, w: f64, support: &[usize]) -> Result<Vec<f64>> {
    let m = support.len();
    let mut sys = DMatrix::<f64>::zeros(n + 1, m);
    for i in 0..n {
        for (c, &j) in support.iter().enumerate() {
            sys[(i, c)] = a[i * n + j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for c in 0..m {
        sys[(n, c)] = CONSTRAINT_WEIGHT * w;
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    rhs[n] = CONSTRAINT_WEIGHT;
    let svd = sys.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Parse(format!("least-squares solve failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

fn clamp_and_normalize(p: &mut [f64], w: f64) -> Result<()> {
    p.iter_mut().for_each(|x| *x = x.max(0.0));
    let mass: f64 = p.iter().sum::<f64>() * w;
    if !(mass > 0.0) {
        return Err(Error::TrivialSolution);
    }
    p.iter_mut().for_each(|x| *x /= mass);
    Ok(())
}

/// Relative fixed-point residual `‖A p − p‖₂ / ‖p‖₂` of a density on a
/// Nyström node grid.
pub fn stationarity_residual(kernel: &dyn Kernel, grid: &NystromGrid, p: &[f64]) -> f64 {
    let a = grid.matrix(kernel);
    let mut ap = vec![0.0; p.len()];
    mat_vec(&a, p, &mut ap);
    let num: f64 = ap.iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = p.iter().map(|x| x * x).sum();
    (num / den).sqrt()
}
