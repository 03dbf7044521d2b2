//! `solve` and `baseline`: run one experiment per sweep value and seed and
//! write per-run CSVs plus one summary table.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use fredholm::baselines::{nystrom_eig, nystrom_invariant, stationarity_residual, NystromGrid, Projection};
use fredholm::metrics::{ise, normal_quantiles, w1_empirical, w1_to_normal, write_summary_csv, SummaryRow};
use fredholm::problems::{
    exponential_kernel_problem, gaussian_toy_problem, gp_fit, gp_predictive_kernel, gp_ssm_problem,
    normal_pdf, ConstantKernel, ExponentialEigenpair, ExponentialKernel, GradientMode,
    PredictiveKernel, TrainingData,
};
use fredholm::reconstruct::{plug_in_density_counted, GridDensity};
use fredholm::sde::{run_with, Diagnostics};
use fredholm::{FredholmProblem, ParticleCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{ConfigError, ExperimentConfig, ProblemConfig, Variant};

/// Stream tag separating the invariance-check sampler from solver noise.
const INVARIANCE_STREAM: u64 = 0x1f3d_5b79;

enum Built {
    Toy(FredholmProblem),
    Exponential(FredholmProblem, ExponentialEigenpair),
    Gp(FredholmProblem, Arc<PredictiveKernel>),
}

fn gp_kernel(problem: &ProblemConfig, seed: u64) -> anyhow::Result<Arc<PredictiveKernel>> {
    let ProblemConfig::GpSsm {
        training_points,
        noise_sd,
        length_scale_sq,
        signal_var,
        training_csv,
        ..
    } = problem
    else {
        unreachable!("called for gp-ssm only")
    };
    let data = match training_csv {
        Some(path) => TrainingData::from_csv(path)?,
        None => TrainingData::generate(*training_points, *noise_sd, seed),
    };
    let model = gp_fit(&data.x, &data.z, *length_scale_sq, *signal_var)?;
    Ok(Arc::new(gp_predictive_kernel(Arc::new(model), GradientMode::Analytic)))
}

fn build(config: &ExperimentConfig, seed: u64) -> anyhow::Result<Built> {
    Ok(match &config.problem {
        ProblemConfig::GaussianToy { lambda, beta } => Built::Toy(
            gaussian_toy_problem(*lambda, *beta).map_err(|e| ConfigError(e.to_string()))?,
        ),
        ProblemConfig::Exponential => {
            let (p, pair) = exponential_kernel_problem();
            Built::Exponential(p, pair)
        }
        ProblemConfig::Unit => {
            bail!(ConfigError(
                "the unit kernel is a baseline sanity case; the particle solver needs an integrable kernel".into()
            ))
        }
        ProblemConfig::GpSsm { .. } => {
            let kernel = gp_kernel(&config.problem, seed)?;
            Built::Gp(gp_ssm_problem(kernel.clone()), kernel)
        }
    })
}

pub struct RunContext<'a> {
    pub root: &'a Path,
    pub rows: Vec<SummaryRow>,
}

impl RunContext<'_> {
    fn row(&mut self, v: &Variant, seed: u64, metric: &str, value: f64) {
        let c = &v.config;
        self.rows.push(SummaryRow {
            experiment: v.label.clone(),
            seed,
            n_particles: c.sim.n_particles,
            gamma: c.sim.step,
            alpha: c.regularization.alpha,
            metric: metric.to_string(),
            value,
        });
    }

    fn run_dir(&self, v: &Variant, seed: u64) -> anyhow::Result<PathBuf> {
        let dir = self.root.join(&v.dir).join(format!("seed-{seed}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Draws from the plug-in mixture `(1/N) Σ k(·, X^k)` of a GP-SSM cloud and
/// pushes every draw one more step through the same transition; returns
/// W1 between the two samples.
pub fn invariance_w1(
    cloud: &ParticleCloud,
    kernel: &PredictiveKernel,
    samples: usize,
    seed: u64,
) -> anyhow::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INVARIANCE_STREAM);
    let step = |y: f64, rng: &mut ChaCha8Rng| {
        let (m, v) = kernel.moments(y);
        m + v.sqrt() * rng.sample::<f64, _>(StandardNormal)
    };
    let xs: Vec<f64> = (0..samples)
        .map(|_| {
            let k = rng.random_range(0..cloud.len());
            step(cloud.particle(k)[0], &mut rng)
        })
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| step(x, &mut rng)).collect();
    Ok(w1_empirical(&xs, &ys)?)
}

pub fn solve(config: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<()> {
    for variant in config.variants() {
        let c = &variant.config;
        let grid = c.grid();
        let reg = c.regularization();
        for &seed in &c.seeds {
            let built = build(c, seed)?;
            let problem = match &built {
                Built::Toy(p) | Built::Exponential(p, _) | Built::Gp(p, _) => p,
            };
            let sim = c.sim_config(seed);
            let diagnostics = Diagnostics {
                functional_grid: Some(grid),
                w1_reference: match built {
                    Built::Toy(_) => Some(normal_quantiles(sim.n_particles, 0.0, 1.0)),
                    _ => None,
                },
                keep_snapshots: false,
            };
            let out = run_with(problem, &reg, &sim, &diagnostics)
                .with_context(|| format!("{} seed {seed}", variant.label))?;
            let cloud = &out.cloud;

            let dir = ctx.run_dir(&variant, seed)?;
            cloud.write_csv(create(&dir.join("cloud.csv"))?)?;
            out.write_trace_csv(create(&dir.join("diagnostics.csv"))?)?;

            let (mut density, clamped) = plug_in_density_counted(cloud, problem, &grid)?;
            let homogeneous = problem.is_homogeneous();
            if c.renormalize || homogeneous {
                density.normalize();
            }
            let mut notes = vec![
                format!("experiment {}", variant.label),
                format!("seed {seed}"),
                format!("mass {}", density.integral()),
            ];
            if clamped > 0 {
                notes.push(format!("clamped {clamped} negative values"));
            }
            density.write_csv(create(&dir.join("density.csv"))?, &notes)?;

            let mean = cloud.mean()[0];
            let var = cloud.variance()[0];
            ctx.row(&variant, seed, "mean", mean);
            ctx.row(&variant, seed, "variance", var);
            ctx.row(&variant, seed, "steps", (cloud.step_index()) as f64);
            if let Some(f) = out.trace.last().and_then(|r| r.functional) {
                ctx.row(&variant, seed, "functional", f);
            }
            match &built {
                Built::Toy(_) => {
                    let exact = GridDensity::from_fn(&grid, |x| normal_pdf(x, 0.0, 1.0));
                    ctx.row(&variant, seed, "ise", ise(&density, &exact)?);
                    ctx.row(&variant, seed, "sq_err_mean", mean * mean);
                    ctx.row(&variant, seed, "sq_err_var", (var - 1.0) * (var - 1.0));
                    ctx.row(&variant, seed, "w1", w1_to_normal(cloud, 0.0, 1.0)?);
                }
                Built::Exponential(_, pair) => {
                    ctx.row(&variant, seed, "ise", ise(&density, &pair.density_on(&grid))?);
                }
                Built::Gp(_, kernel) => {
                    let ProblemConfig::GpSsm {
                        invariance_samples, ..
                    } = &c.problem
                    else {
                        unreachable!()
                    };
                    let w1 = invariance_w1(cloud, kernel, *invariance_samples, seed)?;
                    ctx.row(&variant, seed, "w1_invariance", w1);
                    ctx.row(&variant, seed, "variance_clamps", kernel.clamp_count() as f64);
                }
            }
            eprintln!("{} seed {seed}: done ({} steps)", variant.label, cloud.step_index());
        }
    }
    Ok(())
}

pub fn baseline(config: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<()> {
    let section = config.baseline.unwrap_or(crate::config::BaselineSection {
        lower: config.grid.lower,
        upper: config.grid.upper,
        nodes: 500,
    });
    let (lower, upper, n) = (section.lower, section.upper, section.nodes);
    let grid = config.grid();
    let variant = Variant {
        label: format!("{}/nystrom", config.label()),
        dir: "nystrom".into(),
        config: config.clone(),
    };
    match &config.problem {
        ProblemConfig::GaussianToy { .. } => bail!(ConfigError(
            "no Nyström baseline for the inhomogeneous toy; use exponential, unit or gp-ssm".into()
        )),
        ProblemConfig::Exponential | ProblemConfig::Unit => {
            let unit = ConstantKernel(1.0);
            let kernel: &dyn fredholm::Kernel = match config.problem {
                ProblemConfig::Unit => &unit,
                _ => &ExponentialKernel,
            };
            let sol = nystrom_eig(kernel, lower, upper, n)?;
            let dir = ctx.run_dir(&variant, 0)?;
            sol.density().write_csv(
                create(&dir.join("eigenfunction.csv"))?,
                &[
                    format!("eigenvalue {}", sol.eigenvalue),
                    format!("iterations {}", sol.iterations),
                ],
            )?;
            ctx.row(&variant, 0, "nystrom_eigenvalue", sol.eigenvalue);
            ctx.row(&variant, 0, "nystrom_residual", sol.residual);
            if matches!(config.problem, ProblemConfig::Exponential) {
                let (_, pair) = exponential_kernel_problem();
                let interp = sol.interpolate(kernel, &grid);
                ctx.row(&variant, 0, "ise", ise(&interp, &pair.density_on(&grid))?);
                ctx.row(&variant, 0, "analytic_eigenvalue", pair.eigenvalue);
            }
            eprintln!("nystrom: eigenvalue {}", sol.eigenvalue);
        }
        ProblemConfig::GpSsm { .. } => {
            let nodes = NystromGrid::new(lower, upper, n)?;
            for &seed in &config.seeds {
                let kernel = gp_kernel(&config.problem, seed)?;
                let inv = nystrom_invariant(kernel.as_ref(), lower, upper, n, Projection::default())?;
                let residual = stationarity_residual(kernel.as_ref(), &nodes, inv.values());
                let dir = ctx.run_dir(&variant, seed)?;
                inv.write_csv(
                    create(&dir.join("invariant.csv"))?,
                    &[format!("residual {residual}")],
                )?;
                ctx.row(&variant, seed, "nystrom_residual", residual);
                ctx.row(&variant, seed, "mean", inv.mean());
                ctx.row(&variant, seed, "variance", inv.variance());
                eprintln!("nystrom seed {seed}: residual {residual:e}");
            }
        }
    }
    Ok(())
}

/// Writes the summary table under `name` and echoes the resolved config.
pub fn write_outputs(config: &ExperimentConfig, ctx: &RunContext, name: &str) -> anyhow::Result<()> {
    write_summary_csv(&ctx.rows, create(&ctx.root.join(name))?, true)?;
    fs::write(ctx.root.join("config.toml"), config.to_toml())
        .with_context(|| format!("writing config into {}", ctx.root.display()))?;
    Ok(())
}
