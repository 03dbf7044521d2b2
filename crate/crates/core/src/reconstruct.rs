//! Smooth densities from a particle cloud on a uniform 1-D grid.
//!
//! Two reconstructions are provided: the plug-in estimate
//! `π̂(x) = φ(x) + (λ/N) Σ k(x, X^k)`, which substitutes the cloud into the
//! right-hand side of the equation, and a Gaussian KDE of the cloud itself.
//! Comparing the two gives a numerical estimate of the regularized
//! objective, used for adaptive stopping.

use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use rayon::prelude::*;
use statrs::statistics::{Data, Distribution, OrderStatistics};

use crate::error::{Error, Result};
use crate::problems::{normal_pdf, FredholmProblem, Regularization};
use crate::sde::ParticleCloud;

/// KDE and plug-in values below this contribute nothing to KL integrals.
pub const DENSITY_CUTOFF: f64 = 1e-30;

/// Uniform grid `lower = g_0 < … < g_{G-1} = upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lower: f64,
    upper: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::invalid(format!(
                "grid bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        if points < 2 {
            return Err(Error::invalid("grid needs at least 2 points"));
        }
        Ok(Self {
            lower,
            upper,
            points,
        })
    }

    /// `[-8, 8]` with 1601 points.
    pub fn toy_default() -> Self {
        Self::new(-8.0, 8.0, 1601).expect("valid")
    }

    /// `[-20, 10]` with 1501 points.
    pub fn gp_ssm_default() -> Self {
        Self::new(-20.0, 10.0, 1501).expect("valid")
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.point(i))
    }

    /// Same grid with twice as many intervals.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * self.points - 1,
            ..*self
        }
    }
}

/// Density values on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64) -> f64 + Sync) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(grid.point(i)))
            .collect();
        Self {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoid integral of the values.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing())
    }

    /// Rescales to unit trapezoid mass; a zero-mass density is left untouched.
    pub fn normalize(&mut self) -> f64 {
        let mass = self.integral();
        if mass > 0.0 && mass.is_finite() {
            for v in &mut self.values {
                *v /= mass;
            }
        }
        mass
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Mean of the normalized density.
    pub fn mean(&self) -> f64 {
        let mass = self.integral();
        let xf: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(x, v)| x * v)
            .collect();
        trapezoid(&xf, self.grid.spacing()) / mass
    }

    /// Variance of the normalized density.
    pub fn variance(&self) -> f64 {
        let mass = self.integral();
        let m = self.mean();
        let sq: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(x, v)| (x - m) * (x - m) * v)
            .collect();
        trapezoid(&sq, self.grid.spacing()) / mass
    }

    /// Draws `n` samples by inverting the piecewise-linear CDF of the
    /// (clamped, normalized) density.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let h = self.grid.spacing();
        let mut cdf = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * h * (w[0].max(0.0) + w[1].max(0.0));
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::EmptyInput("density has no mass to sample from"));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.random::<f64>() * acc;
            let i = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1);
            let (c0, c1) = (cdf[i - 1], cdf[i]);
            let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
            out.push(self.grid.point(i - 1) + t * h);
        }
        Ok(out)
    }

    /// Two-column CSV `x,value` preceded by `# ` comment lines.
    pub fn write_csv(&self, mut w: impl Write, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["x", "value"])?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            writer.write_record([x.to_string(), v.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`GridDensity::write_csv`]; the grid must be uniform.
    pub fn read_csv(r: impl Read) -> Result<Self> {
        let reader = BufReader::new(r);
        let body: String = reader
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.starts_with('#')))
            .collect::<std::io::Result<Vec<_>>>()?
            .join("\n");
        let mut csv = csv::Reader::from_reader(body.as_bytes());
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for rec in csv.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
            };
            xs.push(parse(&rec[0])?);
            vs.push(parse(&rec[1])?);
        }
        if xs.len() < 2 {
            return Err(Error::Parse("density CSV needs at least 2 rows".into()));
        }
        let grid = GridSpec::new(xs[0], xs[xs.len() - 1], xs.len())?;
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.point(i)).abs() > 1e-9 * (1.0 + x.abs()) {
                return Err(Error::GridMismatch(format!(
                    "row {i}: x = {x} is not on a uniform grid"
                )));
            }
        }
        GridDensity::new(grid, vs)
    }
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// `φ(x) + (λ/N) Σ_k k(x, X^k)` at one point of any dimension.
pub fn plug_in_eval(cloud: &ParticleCloud, problem: &FredholmProblem, x: &[f64]) -> f64 {
    let sum: f64 = cloud.iter().map(|xk| problem.kernel.eval(x, xk)).sum();
    problem.forcing.eval(x) + problem.lambda * sum / cloud.len() as f64
}

/// Plug-in reconstruction on a 1-D grid. Negative values (only possible for
/// `λ < 0`) are clamped to zero and counted.
pub fn plug_in_density_counted(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    grid: &GridSpec,
) -> Result<(GridDensity, usize)> {
    require_1d(cloud)?;
    let mut density = GridDensity::from_fn(grid, |x| plug_in_eval(cloud, problem, &[x]));
    let mut clamped = 0;
    for v in &mut density.values {
        if *v < 0.0 {
            *v = 0.0;
            clamped += 1;
        }
    }
    Ok((density, clamped))
}

pub fn plug_in_density(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    grid: &GridSpec,
) -> Result<GridDensity> {
    plug_in_density_counted(cloud, problem, grid).map(|(d, _)| d)
}

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · N^{-1/5}`, floored at
/// `1e-6 · (1 + |mean|)` for degenerate clouds.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    let mut data = Data::new(samples.to_vec());
    let mean = data.mean().unwrap_or(0.0);
    let sd = if n > 1 {
        data.std_dev().unwrap_or(0.0)
    } else {
        0.0
    };
    let iqr = data.interquartile_range();
    let mut spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        spread = sd;
    }
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    let floor = 1e-6 * (1.0 + mean.abs());
    if h.is_finite() {
        h.max(floor)
    } else {
        floor
    }
}

/// Gaussian KDE of a 1-D cloud; Silverman bandwidth unless given.
pub fn kde_density(
    cloud: &ParticleCloud,
    grid: &GridSpec,
    bandwidth: Option<f64>,
) -> Result<GridDensity> {
    require_1d(cloud)?;
    let xs = cloud.positions();
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(xs),
    };
    let var = h * h;
    let inv_n = 1.0 / xs.len() as f64;
    Ok(GridDensity::from_fn(grid, |x| {
        xs.iter().map(|&xi| normal_pdf(x, xi, var)).sum::<f64>() * inv_n
    }))
}

/// Numerical estimate of the regularized objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalEstimate {
    /// `KL(p̂ ‖ π̂ + η)`.
    pub kl_data: f64,
    /// `KL(p̂ ‖ π₀)`.
    pub kl_reg: f64,
    /// `kl_data + α · kl_reg`.
    pub total: f64,
}

/// Estimates both KL terms by trapezoid quadrature, with the KDE of the
/// cloud standing in for `π` and the plug-in reconstruction for the
/// right-hand side.
pub fn estimate_functional(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    reg: &Regularization,
    grid: &GridSpec,
) -> Result<FunctionalEstimate> {
    let p = kde_density(cloud, grid, None)?;
    let rhs = plug_in_density(cloud, problem, grid)?;
    let mut data_terms = Vec::with_capacity(grid.len());
    let mut reg_terms = Vec::with_capacity(grid.len());
    for ((x, &pv), &rv) in grid.iter().zip(p.values()).zip(rhs.values()) {
        if pv < DENSITY_CUTOFF {
            data_terms.push(0.0);
            reg_terms.push(0.0);
            continue;
        }
        let shifted = rv + reg.eta;
        if !(shifted > 0.0) {
            return Err(Error::SupportMismatch { x });
        }
        data_terms.push(pv * (pv / shifted).ln());
        reg_terms.push(pv * (pv.ln() - reg.reference.log_density_1d(x)));
    }
    let h = grid.spacing();
    let kl_data = trapezoid(&data_terms, h);
    let kl_reg = trapezoid(&reg_terms, h);
    Ok(FunctionalEstimate {
        kl_data,
        kl_reg,
        total: kl_data + reg.alpha * kl_reg,
    })
}

fn require_1d(cloud: &ParticleCloud) -> Result<()> {
    if cloud.dim() != 1 {
        return Err(Error::invalid(format!(
            "grid reconstructions need a 1-D cloud, got dimension {}",
            cloud.dim()
        )));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyInput("particle cloud"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::problems::{gaussian_toy_problem, GaussianForcing, GaussianTransitionKernel};

    #[test]
    fn zero_lambda_reconstruction_is_forcing() {
        let problem = FredholmProblem::new(
            Arc::new(GaussianTransitionKernel::new(0.5)),
            Arc::new(GaussianForcing {
                weight: 0.4,
                mean: 0.0,
                var: 1.0,
            }),
            0.0,
            1,
        )
        .unwrap();
        let cloud = ParticleCloud::from_positions(vec![0.3, 1.0], 1).unwrap();
        let grid = GridSpec::new(-3.0, 3.0, 61).unwrap();
        let d = plug_in_density(&cloud, &problem, &grid).unwrap();
        for (x, v) in grid.iter().zip(d.values()) {
            assert_eq!(*v, problem.forcing.eval(&[x]));
        }
    }

    #[test]
    fn single_particle_reconstruction() {
        let problem = gaussian_toy_problem(0.4, 0.5).unwrap();
        let y0 = 0.8;
        let cloud = ParticleCloud::from_positions(vec![y0], 1).unwrap();
        let grid = GridSpec::new(-3.0, 3.0, 61).unwrap();
        let d = plug_in_density(&cloud, &problem, &grid).unwrap();
        for (x, v) in grid.iter().zip(d.values()) {
            let expected = problem.forcing.eval(&[x]) + 0.4 * problem.kernel.eval(&[x], &[y0]);
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_lambda_values_are_clamped_and_counted() {
        let problem = FredholmProblem::new(
            Arc::new(GaussianTransitionKernel::new(0.5)),
            Arc::new(GaussianForcing {
                weight: 0.1,
                mean: 0.0,
                var: 1.0,
            }),
            -2.0,
            1,
        )
        .unwrap();
        let cloud = ParticleCloud::from_positions(vec![0.0], 1).unwrap();
        let grid = GridSpec::new(-3.0, 3.0, 61).unwrap();
        let (d, clamped) = plug_in_density_counted(&cloud, &problem, &grid).unwrap();
        assert!(clamped > 0);
        assert!(d.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_point_kde_is_kernel() {
        let cloud = ParticleCloud::from_positions(vec![0.0], 1).unwrap();
        let grid = GridSpec::new(-4.0, 4.0, 81).unwrap();
        let d = kde_density(&cloud, &grid, Some(1.0)).unwrap();
        for (x, v) in grid.iter().zip(d.values()) {
            assert!((v - normal_pdf(x, 0.0, 1.0)).abs() < 1e-16);
        }
    }

    #[test]
    fn kde_normalizes() {
        let cloud = ParticleCloud::from_positions(vec![-1.0, 0.2, 0.5, 2.0], 1).unwrap();
        let h = silverman_bandwidth(cloud.positions());
        let grid = GridSpec::new(-1.0 - 6.0 * h, 2.0 + 6.0 * h, 2001).unwrap();
        let d = kde_density(&cloud, &grid, None).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn degenerate_cloud_gets_floor_bandwidth() {
        let h = silverman_bandwidth(&[2.0, 2.0, 2.0]);
        assert!((h - 3e-6).abs() < 1e-18);
        assert!((silverman_bandwidth(&[-1.0]) - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn non_positive_bandwidth_rejected() {
        let cloud = ParticleCloud::from_positions(vec![0.0], 1).unwrap();
        let grid = GridSpec::new(-1.0, 1.0, 3).unwrap();
        assert!(kde_density(&cloud, &grid, Some(0.0)).is_err());
    }

    #[test]
    fn two_dimensional_cloud_has_no_grid() {
        let problem = gaussian_toy_problem(0.5, 0.5).unwrap();
        let cloud = ParticleCloud::from_positions(vec![0.0, 1.0], 2).unwrap();
        let grid = GridSpec::toy_default();
        assert!(plug_in_density(&cloud, &problem, &grid).is_err());
        assert!(plug_in_eval(&cloud, &problem, &[0.0, 0.0]) > 0.0);
    }

    #[test]
    fn support_mismatch_detected() {
        let problem = FredholmProblem::new(
            Arc::new(crate::problems::ConstantKernel(0.0)),
            Arc::new(crate::problems::ZeroForcing),
            1.0,
            1,
        )
        .unwrap();
        let cloud = ParticleCloud::from_positions(vec![0.0, 0.5], 1).unwrap();
        let reg = Regularization::new(0.0, 0.0, crate::problems::ReferenceMeasure::Flat);
        let err = estimate_functional(&cloud, &problem, &reg, &GridSpec::toy_default());
        assert!(matches!(err, Err(Error::SupportMismatch { .. })));
    }

    #[test]
    fn total_combines_terms() {
        let problem = gaussian_toy_problem(0.5, 0.5).unwrap();
        let cloud =
            ParticleCloud::from_positions((0..50).map(|i| -2.0 + 0.08 * i as f64).collect(), 1)
                .unwrap();
        let reg = Regularization::new(
            0.3,
            0.0,
            crate::problems::ReferenceMeasure::standard_normal(),
        );
        let f = estimate_functional(&cloud, &problem, &reg, &GridSpec::toy_default()).unwrap();
        assert_eq!(f.total, f.kl_data + 0.3 * f.kl_reg);
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let grid = GridSpec::new(-1.0, 1.0, 11).unwrap();
        let d = GridDensity::from_fn(&grid, |x| (x * 1.7).exp() / 3.0);
        let mut buf = Vec::new();
        d.write_csv(&mut buf, &["producer=test".to_string()]).unwrap();
        let back = GridDensity::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), d.values());
        assert_eq!(back.grid(), d.grid());
    }

    #[test]
    fn grid_sampling_matches_moments() {
        use rand::SeedableRng;
        let grid = GridSpec::new(-8.0, 8.0, 1601).unwrap();
        let d = GridDensity::from_fn(&grid, |x| normal_pdf(x, 1.0, 0.25));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = d.sample(20_000, &mut rng).unwrap();
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / s.len() as f64;
        assert!((m - 1.0).abs() < 0.02);
        assert!((v - 0.25).abs() < 0.02);
    }
}
