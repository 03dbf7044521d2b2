//! Euler–Maruyama simulation of the interacting particle system
//!
//! ```text
//! X_{n+1}^k = X_n^k + γ b(X_n^k, π_n^N) + √(2γ(α + 1)) Z_{n+1}^k
//! ```
//!
//! whose empirical measure approximates the minimizer of the regularized
//! objective for large `N`, small `γ` and large `nγ`.
//!
//! Randomness is counter based: the Gaussian increments of particle `k` at
//! step `n` come from a ChaCha stream keyed by `(seed, k)` and selected by
//! `n`, so the trajectory for a seed does not depend on the thread count.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::drift::{drift_all, pairwise_denominators};
use crate::error::{Error, Result};
use crate::metrics::w1_empirical;
use crate::problems::{FredholmProblem, Regularization};
use crate::reconstruct::{estimate_functional, GridSpec};

const DOMAIN_INIT: u64 = 0x696e_6974;
const DOMAIN_NOISE: u64 = 0x6e6f_6973;

/// Particle positions (`N × d`, row-major) at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    positions: Vec<f64>,
    dim: usize,
    step: u64,
}

impl ParticleCloud {
    pub fn from_positions(positions: Vec<f64>, dim: usize) -> Result<Self> {
        Self::at_step(positions, dim, 0)
    }

    pub fn at_step(positions: Vec<f64>, dim: usize, step: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !positions.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} coordinates do not split into points of dimension {dim}",
                positions.len()
            )));
        }
        let cloud = Self {
            positions,
            dim,
            step,
        };
        cloud.check_finite()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.positions.chunks_exact(self.dim)
    }

    /// Sample mean of each coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += pi;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|mi| *mi /= n);
        m
    }

    /// Population variance (divisor `N`) of each coordinate.
    pub fn variance(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = vec![0.0; self.dim];
        for p in self.iter() {
            for i in 0..self.dim {
                v[i] += (p[i] - m[i]) * (p[i] - m[i]);
            }
        }
        let n = self.len() as f64;
        v.iter_mut().for_each(|vi| *vi /= n);
        v
    }

    fn check_finite(&self) -> Result<()> {
        match self.positions.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::Divergence {
                step: self.step,
                particle: i / self.dim,
            }),
            None => Ok(()),
        }
    }

    /// CSV rows `step,particle_id,x_1,…,x_d`, optionally with the header.
    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>, header: bool) -> Result<()> {
        if header {
            let mut h = vec!["step".to_string(), "particle_id".to_string()];
            h.extend((1..=self.dim).map(|i| format!("x_{i}")));
            w.write_record(&h)?;
        }
        let step = self.step.to_string();
        for (k, p) in self.iter().enumerate() {
            let mut row = Vec::with_capacity(self.dim + 2);
            row.push(step.clone());
            row.push(k.to_string());
            row.extend(p.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        Ok(())
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        self.write_csv_rows(&mut writer, true)?;
        writer.flush()?;
        Ok(())
    }

    /// Reads the last step of a cloud or trajectory CSV.
    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut snapshots = read_trajectory_csv(r)?;
        snapshots
            .pop()
            .ok_or(Error::EmptyInput("cloud CSV has no rows"))
    }
}

/// Reads every step of a trajectory CSV in file order.
pub fn read_trajectory_csv(r: impl Read) -> Result<Vec<ParticleCloud>> {
    let mut reader = csv::Reader::from_reader(r);
    let dim = reader.headers()?.len().saturating_sub(2);
    if dim == 0 {
        return Err(Error::Parse(
            "cloud CSV needs columns step,particle_id,x_1..x_d".into(),
        ));
    }
    let mut out: Vec<ParticleCloud> = Vec::new();
    let mut current: Option<(u64, Vec<f64>)> = None;
    for rec in reader.records() {
        let rec = rec?;
        let step: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("step {:?}: {e}", &rec[0])))?;
        let coords = (2..rec.len()).map(|i| {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{:?}: {e}", &rec[i])))
        });
        match &mut current {
            Some((s, pos)) if *s == step => {
                for c in coords {
                    pos.push(c?);
                }
            }
            _ => {
                if let Some((s, pos)) = current.take() {
                    out.push(ParticleCloud::at_step(pos, dim, s)?);
                }
                current = Some((step, coords.collect::<Result<Vec<_>>>()?));
            }
        }
    }
    if let Some((s, pos)) = current {
        out.push(ParticleCloud::at_step(pos, dim, s)?);
    }
    Ok(out)
}

/// Initial distribution `π_init` (product over coordinates).
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Gaussian { mean: f64, var: f64 },
    Uniform { lower: f64, upper: f64 },
    /// Points read from a CSV (one point per row, or a cloud CSV). Used in
    /// order when the file holds exactly `N` points, resampled otherwise.
    Samples(PathBuf),
}

/// Stop once the windowed mean of the functional estimate decreases by
/// less than `rel_tol` (relative) between consecutive windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub window: usize,
    pub rel_tol: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            window: 5,
            rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_particles: usize,
    /// Step size `γ`.
    pub step: f64,
    /// Number of steps `n_T`.
    pub horizon: u64,
    pub seed: u64,
    pub init: InitSpec,
    pub stopping: Option<StoppingRule>,
    pub snapshot_every: u64,
}

impl SimConfig {
    pub fn new(n_particles: usize, step: f64, horizon: u64, seed: u64, init: InitSpec) -> Self {
        Self {
            n_particles,
            step,
            horizon,
            seed,
            init,
            stopping: None,
            snapshot_every: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::invalid("need at least one particle"));
        }
        if !(self.step > 0.0 && (self.step * self.horizon as f64).is_finite()) {
            return Err(Error::invalid(format!(
                "step must be positive with a finite horizon, got {}",
                self.step
            )));
        }
        if self.snapshot_every == 0 {
            return Err(Error::invalid("snapshot interval must be positive"));
        }
        if let Some(rule) = self.stopping {
            if rule.window < 2 || !(rule.rel_tol > 0.0) {
                return Err(Error::invalid(
                    "stopping rule needs window >= 2 and rel_tol > 0",
                ));
            }
        }
        match self.init {
            InitSpec::Gaussian { var, .. } if !(var >= 0.0) => {
                Err(Error::invalid("initial variance must be nonnegative"))
            }
            InitSpec::Uniform { lower, upper } if !(lower <= upper) => {
                Err(Error::invalid("uniform init needs lower <= upper"))
            }
            _ => Ok(()),
        }
    }
}

fn keyed_rng(seed: u64, domain: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Draws `N` i.i.d. points from the initial distribution.
pub fn init_cloud(config: &SimConfig, dim: usize) -> Result<ParticleCloud> {
    config.validate()?;
    let n = config.n_particles;
    let mut rng = keyed_rng(config.seed, DOMAIN_INIT, 0, 0);
    let positions = match &config.init {
        InitSpec::Gaussian { mean, var } => {
            let sd = var.sqrt();
            (0..n * dim)
                .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        InitSpec::Uniform { lower, upper } => (0..n * dim)
            .map(|_| lower + (upper - lower) * rng.random::<f64>())
            .collect(),
        InitSpec::Samples(path) => {
            let points = read_points(path, dim)?;
            let m = points.len() / dim;
            if m == 0 {
                return Err(Error::EmptyInput("initial samples file"));
            }
            if m == n {
                points
            } else {
                let mut out = Vec::with_capacity(n * dim);
                for _ in 0..n {
                    let i = rng.random_range(0..m);
                    out.extend_from_slice(&points[i * dim..(i + 1) * dim]);
                }
                out
            }
        }
    };
    ParticleCloud::from_positions(positions, dim)
}

fn read_points(path: &Path, dim: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() < dim {
            return Err(Error::Parse(format!(
                "{}: row {} has {} columns, need {dim}",
                path.display(),
                line + 1,
                rec.len()
            )));
        }
        // Trailing columns are the coordinates (cloud CSVs lead with step, id).
        let coords: std::result::Result<Vec<f64>, _> = (rec.len() - dim..rec.len())
            .map(|i| rec[i].parse::<f64>())
            .collect();
        match coords {
            Ok(c) => out.extend(c),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Parse(format!(
                    "{}: row {}: {e}",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Seeded source of the Gaussian increments `Z_n^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Increments of one particle at one step.
    pub fn particle(&self, step: u64, particle: usize, out: &mut [f64]) {
        let mut rng = keyed_rng(self.seed, DOMAIN_NOISE, particle as u64, step);
        for o in out {
            *o = rng.sample(StandardNormal);
        }
    }

    /// Increments of all `n` particles at `step`, `n × dim` row-major.
    pub fn draw(&self, step: u64, n: usize, dim: usize) -> Vec<f64> {
        let mut z = vec![0.0; n * dim];
        z.par_chunks_mut(dim)
            .with_min_len(64)
            .enumerate()
            .for_each(|(k, row)| self.particle(step, k, row));
        z
    }
}

/// One Euler–Maruyama step with explicitly supplied increments `z` (`N × d`).
pub fn euler_step_with_noise(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    reg: &Regularization,
    step: f64,
    z: &[f64],
) -> Result<ParticleCloud> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    if z.len() != cloud.positions.len() {
        return Err(Error::invalid(format!(
            "{} noise values for {} coordinates",
            z.len(),
            cloud.positions.len()
        )));
    }
    let scratch = pairwise_denominators(cloud, problem, reg.eta)?;
    let drift = drift_all(cloud, &scratch, problem, reg)?;
    let scale = (2.0 * step * (reg.alpha + 1.0)).sqrt();
    let positions = cloud
        .positions
        .iter()
        .zip(&drift)
        .zip(z)
        .map(|((x, b), zi)| x + step * b + scale * zi)
        .collect();
    ParticleCloud::at_step(positions, cloud.dim, cloud.step + 1)
}

/// One Euler–Maruyama step driven by `noise`.
pub fn euler_step(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    reg: &Regularization,
    step: f64,
    noise: &NoiseSource,
) -> Result<ParticleCloud> {
    let z = noise.draw(cloud.step + 1, cloud.len(), cloud.dim);
    euler_step_with_noise(cloud, problem, reg, step, &z)
}

/// What to record along a run besides the final cloud.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Grid for the functional estimate (1-D only). When a stopping rule is
    /// set and this is `None`, the default toy grid is used.
    pub functional_grid: Option<GridSpec>,
    /// Samples of a 1-D reference law; W1 of the cloud to it is traced.
    pub w1_reference: Option<Vec<f64>>,
    /// Keep a copy of the cloud at every snapshot.
    pub keep_snapshots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub functional: Option<f64>,
    pub w1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub cloud: ParticleCloud,
    pub trace: Vec<TraceRow>,
    pub snapshots: Vec<ParticleCloud>,
    /// Step at which the stopping rule fired, if it did.
    pub stopped_at: Option<u64>,
}

impl RunOutput {
    pub fn write_trace_csv(&self, w: impl Write) -> Result<()> {
        write_trace_csv(&self.trace, w)
    }
}

pub fn write_trace_csv(trace: &[TraceRow], w: impl Write) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["step", "functional_estimate", "w1_to_reference"])?;
    for row in trace {
        writer.write_record([row.step.to_string(), opt(row.functional), opt(row.w1)])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trace_csv(r: impl Read) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let opt = |s: &str| -> Result<Option<f64>> {
        let s = s.trim();
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        }
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(TraceRow {
                step: rec[0]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("{:?}: {e}", &rec[0])))?,
                functional: opt(&rec[1])?,
                w1: opt(&rec[2])?,
            })
        })
        .collect()
}

/// Runs the particle scheme with default diagnostics.
pub fn run(
    problem: &FredholmProblem,
    reg: &Regularization,
    config: &SimConfig,
) -> Result<RunOutput> {
    run_with(problem, reg, config, &Diagnostics::default())
}

/// Runs the particle scheme for `horizon` steps or until the stopping rule fires.
pub fn run_with(
    problem: &FredholmProblem,
    reg: &Regularization,
    config: &SimConfig,
    diagnostics: &Diagnostics,
) -> Result<RunOutput> {
    let cloud = init_cloud(config, problem.dim)?;
    run_from(cloud, problem, reg, config, diagnostics)
}

/// Runs the particle scheme from a given initial cloud.
pub fn run_from(
    initial: ParticleCloud,
    problem: &FredholmProblem,
    reg: &Regularization,
    config: &SimConfig,
    diagnostics: &Diagnostics,
) -> Result<RunOutput> {
    config.validate()?;
    if initial.dim() != problem.dim {
        return Err(Error::invalid(format!(
            "cloud dimension {} does not match problem dimension {}",
            initial.dim(),
            problem.dim
        )));
    }
    let noise = NoiseSource::new(config.seed);
    let one_d = problem.dim == 1;
    let functional_grid = match (diagnostics.functional_grid, config.stopping) {
        (Some(g), _) if one_d => Some(g),
        (None, Some(_)) if one_d => Some(GridSpec::toy_default()),
        _ => None,
    };
    let w1_reference = diagnostics.w1_reference.as_deref().filter(|_| one_d);

    let mut out = RunOutput {
        cloud: initial,
        trace: Vec::new(),
        snapshots: Vec::new(),
        stopped_at: None,
    };
    let mut history: Vec<f64> = Vec::new();

    let record = |cloud: &ParticleCloud,
                  out: &mut RunOutput,
                  history: &mut Vec<f64>|
     -> Result<()> {
        let functional = match &functional_grid {
            Some(g) => {
                let f = estimate_functional(cloud, problem, reg, g)?.total;
                history.push(f);
                Some(f)
            }
            None => None,
        };
        let w1 = match w1_reference {
            Some(r) => Some(w1_empirical(cloud.positions(), r)?),
            None => None,
        };
        out.trace.push(TraceRow {
            step: cloud.step_index(),
            functional,
            w1,
        });
        if diagnostics.keep_snapshots {
            out.snapshots.push(cloud.clone());
        }
        Ok(())
    };

    let start = out.cloud.step_index();
    let first = out.cloud.clone();
    record(&first, &mut out, &mut history)?;

    for n in 1..=config.horizon {
        let next = euler_step(&out.cloud, problem, reg, config.step, &noise)?;
        out.cloud = next;
        let is_snapshot = n % config.snapshot_every == 0;
        if is_snapshot || n == config.horizon {
            let c = out.cloud.clone();
            record(&c, &mut out, &mut history)?;
        }
        if is_snapshot {
            if let Some(rule) = config.stopping {
                if has_plateaued(&history, rule) {
                    out.stopped_at = Some(start + n);
                    break;
                }
            }
        }
    }
    Ok(out)
}

fn has_plateaued(history: &[f64], rule: StoppingRule) -> bool {
    let w = rule.window;
    if history.len() < 2 * w {
        return false;
    }
    let tail = &history[history.len() - 2 * w..];
    let prev = tail[..w].iter().sum::<f64>() / w as f64;
    let cur = tail[w..].iter().sum::<f64>() / w as f64;
    prev - cur < rule.rel_tol * prev.abs()
}

/// Budget-optimal particle count and step size for cost `B = N²/γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetPlan {
    pub budget: f64,
    pub c1: f64,
    pub c2: f64,
    pub n_opt: usize,
    pub gamma_opt: f64,
}

/// Minimizes `c1/√N + c2 √γ` subject to `N²/γ = B`:
/// `N = B^{1/3} (c1 / (2 c2))^{2/3}` rounded to an integer `≥ 1`, `γ = N²/B`.
pub fn plan_budget(budget: f64, c1: f64, c2: f64) -> Result<BudgetPlan> {
    if !(budget > 0.0 && c1 > 0.0 && c2 > 0.0) || !(budget * c1 * c2).is_finite() {
        return Err(Error::invalid(
            "budget and error constants must be positive and finite",
        ));
    }
    let n = budget.cbrt() * (c1 / (2.0 * c2)).powf(2.0 / 3.0);
    let n_opt = n.round().max(1.0) as usize;
    let gamma_opt = (n_opt as f64).powi(2) / budget;
    Ok(BudgetPlan {
        budget,
        c1,
        c2,
        n_opt,
        gamma_opt,
    })
}
